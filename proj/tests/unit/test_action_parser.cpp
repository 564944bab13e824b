// SPDX-License-Identifier: Apache-2.0
#include "dsagent/action_parser.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace dsagent;
using nlohmann::json;

namespace {

ChatResponse text_reply(std::string text)
{
    ChatResponse r;
    r.raw_text = std::move(text);
    return r;
}

ChatResponse tool_reply(std::string name, std::string args)
{
    ChatResponse r;
    r.native_tool_call = ToolCall{std::move(name), std::move(args)};
    return r;
}

ErrorCode rejection(const ChatResponse& r, ToolMode mode)
{
    try {
        parse_action(r, mode);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError; // accepted: not a parser code
}

bool parser_code(ErrorCode c)
{
    return c == ErrorCode::UnknownAction || c == ErrorCode::MissingField || c == ErrorCode::UnexpectedField ||
           c == ErrorCode::InvalidFieldType || c == ErrorCode::NoJsonFound;
}

} // namespace

TEST_CASE("reference listings")
{
    const auto text = parse_action(
        text_reply(R"({"action":"request_text","spec":"Explain how the model will be evaluated and metrics that have to be computed."})"),
        ToolMode::EmulatedJson);
    CHECK(text == OrchestratorAction{RequestText{
                      "Explain how the model will be evaluated and metrics that have to be computed."}});

    const auto code = parse_action(
        text_reply(R"({"action":"request_code","purpose":"Load the training and test datasets into pandas DataFrames."})"),
        ToolMode::EmulatedJson);
    CHECK(code == OrchestratorAction{RequestCode{"Load the training and test datasets into pandas DataFrames."}});

    const std::string hint =
        "Baseline logistic regression trained and evaluated. Accuracy is about 0.72. No further steps required.";
    const auto fin = parse_action(text_reply(json{{"action", "finish"}, {"purpose", hint}}.dump()), ToolMode::EmulatedJson);
    CHECK(fin == OrchestratorAction{Finish{hint}});

    // The same listings as native tool calls.
    CHECK(parse_action(tool_reply("request_code", R"({"purpose":"Load the training and test datasets into pandas DataFrames."})"),
                       ToolMode::NativeToolCalls) == code);
    CHECK(parse_action(tool_reply("finish", json{{"purpose", hint}}.dump()), ToolMode::NativeToolCalls) == fin);
    CHECK(parse_action(tool_reply("finish", ""), ToolMode::NativeToolCalls) == OrchestratorAction{Finish{}});
}

TEST_CASE("hallucinated and malformed actions are rejected")
{
    CHECK(rejection(text_reply(R"({"action":"write_code","purpose":"x"})"), ToolMode::EmulatedJson) ==
          ErrorCode::UnknownAction);
    CHECK(rejection(tool_reply("write_code", R"({"purpose":"x"})"), ToolMode::NativeToolCalls) ==
          ErrorCode::UnknownAction);
    CHECK(rejection(text_reply(R"({"action":"request_code"})"), ToolMode::EmulatedJson) == ErrorCode::MissingField);
    CHECK(rejection(text_reply(R"({"action":"request_code","purpose":"  "})"), ToolMode::EmulatedJson) ==
          ErrorCode::MissingField);
    CHECK(rejection(text_reply(R"({"action":"request_text","spec":"s","purpose":"p"})"), ToolMode::EmulatedJson) ==
          ErrorCode::UnexpectedField);
    CHECK(rejection(text_reply(R"({"action":"request_text","spec":3})"), ToolMode::EmulatedJson) ==
          ErrorCode::InvalidFieldType);
    CHECK(rejection(text_reply(R"({"action":"finish","summary_hint":"a","purpose":"b"})"), ToolMode::EmulatedJson) ==
          ErrorCode::UnexpectedField);
    CHECK(rejection(text_reply("I think we should load the data."), ToolMode::EmulatedJson) == ErrorCode::NoJsonFound);
    CHECK(rejection(text_reply(""), ToolMode::NativeToolCalls) == ErrorCode::NoJsonFound);
    CHECK(rejection(tool_reply("request_text", "{not json"), ToolMode::NativeToolCalls) == ErrorCode::InvalidFieldType);
    CHECK(rejection(tool_reply("request_text", R"({"action":"finish"})"), ToolMode::NativeToolCalls) ==
          ErrorCode::UnexpectedField);
}

TEST_CASE("native mode falls back to text, emulated mode to tool calls")
{
    CHECK(parse_action(text_reply(R"({"action":"finish"})"), ToolMode::NativeToolCalls) ==
          OrchestratorAction{Finish{}});
    CHECK(parse_action(tool_reply("request_text", R"({"spec":"s"})"), ToolMode::EmulatedJson) ==
          OrchestratorAction{RequestText{"s"}});
}

TEST_CASE("emulation fixtures")
{
    const std::filesystem::path dir = std::filesystem::path(DSAGENT_TEST_DIR) / "fixtures" / "emulation";
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".txt") {
            continue;
        }
        ++count;
        CAPTURE(name);
        const auto expected = json::parse(testing::read_file(dir / (entry.path().stem().string() + ".expected.json")));
        const auto action = parse_action(text_reply(testing::read_file(entry.path())), ToolMode::EmulatedJson);
        CHECK(to_json(action) == expected);
    }
    CHECK(count >= 3);
}

TEST_CASE("fuzzed invalid payloads never validate")
{
    std::mt19937_64 rng(99);
    auto word = [&] { return testing::random_text(rng, 12); };
    const std::vector<std::string> valid_names{"request_text", "request_code", "finish"};
    for (int i = 0; i < 1000; ++i) {
        json j = json::object();
        const auto kind = rng() % 7;
        const auto name = valid_names[rng() % 3];
        switch (kind) {
        case 0: // unknown action
            j = {{"action", "x_" + word()}, {"purpose", word()}};
            break;
        case 1: // missing action
            j = {{"spec", word()}, {"purpose", word()}};
            break;
        case 2: // missing required field
            j = {{"action", name == "finish" ? "request_code" : name}};
            break;
        case 3: // stray field
            j = {{"action", name}, {"spec", "s"}, {"purpose", "p"}, {"summary_hint", "h"}, {"z" + word(), 1}};
            break;
        case 4: // wrong type
            j = {{"action", name}};
            j[name == "request_text" ? "spec" : name == "request_code" ? "purpose" : "summary_hint"] =
                json::array({1, 2});
            break;
        case 5: // action not a string
            j = {{"action", static_cast<int>(rng() % 100)}};
            break;
        default: // no JSON at all
            break;
        }
        const auto text = kind == 6 ? "no object here: " + word() + "]" : "prose " + j.dump() + " tail";
        std::string sanitized = text;
        if (kind == 6) {
            std::erase(sanitized, '{');
        }
        const auto code = rejection(text_reply(sanitized), ToolMode::EmulatedJson);
        CAPTURE(sanitized);
        CHECK(parser_code(code));
    }
}

TEST_CASE("json extraction")
{
    CHECK_FALSE(extract_first_json_object("{broken").has_value());
    CHECK(extract_first_json_object("x {\"a\": \"}\"} y") == json{{"a", "}"}});
    CHECK(extract_first_json_object("[1] {\"a\":{\"b\":2}}") == json{{"a", {{"b", 2}}}});
    CHECK(extract_first_json_object("{\"t\": \"tab\there\"}") == json{{"t", "tab\there"}});
}

TEST_CASE("schemas")
{
    const auto tools = action_tool_definitions();
    REQUIRE(tools.size() == 3);
    CHECK(tools[0]["function"]["name"] == "request_text");
    CHECK(tools[1]["function"]["parameters"]["required"] == json::array({"purpose"}));
    CHECK(tools[2]["function"]["parameters"]["required"].empty());
    CHECK(action_json_schema()["oneOf"].size() == 3);
}
