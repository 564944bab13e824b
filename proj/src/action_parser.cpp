// SPDX-License-Identifier: Apache-2.0
#include "dsagent/action_parser.hpp"

#include <array>

namespace dsagent {

using nlohmann::json;

namespace {

struct FieldRule {
    std::string_view action;
    std::string_view required;  // empty: none
    std::string_view optional;  // empty: none
};

constexpr std::array<FieldRule, 3> kRules{{
    {"request_text", "spec", ""},
    {"request_code", "purpose", ""},
    {"finish", "", "summary_hint"},
}};

std::string expect_string(const json& object, const std::string& key)
{
    const auto& v = object.at(key);
    if (!v.is_string()) {
        throw Error(ErrorCode::InvalidFieldType, "field '" + key + "' must be a string");
    }
    return v.get<std::string>();
}

bool blank(const std::string& s)
{
    return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

OrchestratorAction from_tool_call(const ToolCall& call)
{
    json args = json::object();
    if (!blank(call.arguments_json)) {
        try {
            args = json::parse(call.arguments_json);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::InvalidFieldType,
                        "tool call arguments are not valid JSON: " + std::string(e.what()));
        }
    }
    if (!args.is_object()) {
        throw Error(ErrorCode::InvalidFieldType, "tool call arguments must be a JSON object");
    }
    if (args.contains("action")) {
        if (args["action"] != call.name) {
            throw Error(ErrorCode::UnexpectedField, "tool call arguments name a different action");
        }
    } else {
        args["action"] = call.name;
    }
    return validate_action(args);
}

OrchestratorAction from_text(std::string_view text)
{
    auto object = extract_first_json_object(text);
    if (!object) {
        throw Error(ErrorCode::NoJsonFound, "the reply contains no JSON object");
    }
    return validate_action(*object);
}

} // namespace

json action_json_schema()
{
    return json::parse(R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "OrchestratorAction",
  "oneOf": [
    {
      "type": "object",
      "properties": {
        "action": {"const": "request_text"},
        "spec": {"type": "string", "minLength": 1}
      },
      "required": ["action", "spec"],
      "additionalProperties": false
    },
    {
      "type": "object",
      "properties": {
        "action": {"const": "request_code"},
        "purpose": {"type": "string", "minLength": 1}
      },
      "required": ["action", "purpose"],
      "additionalProperties": false
    },
    {
      "type": "object",
      "properties": {
        "action": {"const": "finish"},
        "summary_hint": {"type": "string"}
      },
      "required": ["action"],
      "additionalProperties": false
    }
  ]
})");
}

json action_tool_definitions()
{
    auto fn = [](std::string_view name, std::string_view description, std::string_view field,
                 std::string_view field_description, bool required) {
        json params = {{"type", "object"}, {"properties", json::object()}, {"additionalProperties", false}};
        params["properties"][std::string(field)] = {{"type", "string"}, {"description", field_description}};
        params["required"] = required ? json::array({field}) : json::array();
        return json{{"type", "function"},
                    {"function", {{"name", name}, {"description", description}, {"parameters", params}}}};
    };
    return json::array({
        fn("request_text", "Ask the text agent for the next Markdown cell.", "spec",
           "What the text should talk about: topic, focus or goal.", true),
        fn("request_code", "Ask the code agent for the next executable code cell.", "purpose",
           "What the code should achieve.", true),
        fn("finish", "Signal that the notebook is complete.", "summary_hint",
           "Optional short note on what was achieved, key results or next steps.", false),
    });
}

OrchestratorAction validate_action(const json& object)
{
    if (!object.is_object()) {
        throw Error(ErrorCode::InvalidFieldType, "an action must be a JSON object");
    }
    if (!object.contains("action")) {
        throw Error(ErrorCode::MissingField, "field 'action' is required");
    }
    const auto name = expect_string(object, "action");
    const FieldRule* rule = nullptr;
    for (const auto& r : kRules) {
        if (r.action == name) {
            rule = &r;
        }
    }
    if (rule == nullptr) {
        throw Error(ErrorCode::UnknownAction, "'" + name + "' is not one of request_text, request_code, finish");
    }

    const bool legacy_finish = name == "finish" && object.contains("purpose");
    for (const auto& [key, _] : object.items()) {
        const bool allowed = key == "action" || key == rule->required || key == rule->optional ||
                             (name == "finish" && key == "purpose");
        if (!allowed) {
            throw Error(ErrorCode::UnexpectedField, "field '" + key + "' is not allowed for " + name);
        }
    }

    if (name == "finish") {
        if (legacy_finish && object.contains("summary_hint")) {
            throw Error(ErrorCode::UnexpectedField, "finish carries both 'summary_hint' and 'purpose'");
        }
        const std::string key = legacy_finish ? "purpose" : "summary_hint";
        Finish finish;
        if (object.contains(key) && !object.at(key).is_null()) {
            auto hint = expect_string(object, key);
            if (!blank(hint)) {
                finish.summary_hint = std::move(hint);
            }
        }
        return finish;
    }

    const std::string key(rule->required);
    if (!object.contains(key)) {
        throw Error(ErrorCode::MissingField, "field '" + key + "' is required for " + name);
    }
    auto value = expect_string(object, key);
    if (blank(value)) {
        throw Error(ErrorCode::MissingField, "field '" + key + "' must not be empty");
    }
    if (name == "request_text") {
        return RequestText{std::move(value)};
    }
    return RequestCode{std::move(value)};
}

namespace {

// Models often wrap long string values over several lines; JSON forbids raw
// control characters inside strings, so escape them and try again.
std::string escape_raw_controls(std::string_view slice)
{
    std::string out;
    out.reserve(slice.size());
    bool in_string = false;
    bool escaped = false;
    for (const char c : slice) {
        if (in_string && !escaped && static_cast<unsigned char>(c) < 0x20) {
            out += c == '\n' ? "\\n" : c == '\t' ? "\\t" : c == '\r' ? "\\r" : " ";
            continue;
        }
        if (!in_string) {
            in_string = c == '"';
        } else if (escaped) {
            escaped = false;
        } else if (c == '\\') {
            escaped = true;
        } else if (c == '"') {
            in_string = false;
        }
        out += c;
    }
    return out;
}

} // namespace

std::optional<json> extract_first_json_object(std::string_view text)
{
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                const auto slice = text.substr(start, i - start + 1);
                auto parsed = json::parse(slice, nullptr, false);
                if (parsed.is_discarded()) {
                    parsed = json::parse(escape_raw_controls(slice), nullptr, false);
                }
                if (!parsed.is_discarded() && parsed.is_object()) {
                    return parsed;
                }
                break;
            }
        }
    }
    return std::nullopt;
}

OrchestratorAction parse_action(const ChatResponse& raw, ToolMode mode)
{
    const bool has_text = !blank(raw.raw_text);
    if (mode == ToolMode::NativeToolCalls) {
        if (raw.native_tool_call) {
            return from_tool_call(*raw.native_tool_call);
        }
        if (has_text) {
            return from_text(raw.raw_text);
        }
    } else {
        if (has_text) {
            return from_text(raw.raw_text);
        }
        if (raw.native_tool_call) {
            return from_tool_call(*raw.native_tool_call);
        }
    }
    throw Error(ErrorCode::NoJsonFound, "the reply is empty");
}

} // namespace dsagent
