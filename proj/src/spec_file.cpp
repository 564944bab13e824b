// SPDX-License-Identifier: Apache-2.0
#include "dsagent/spec_file.hpp"

#include "dsagent/error.hpp"
#include "dsagent/sandbox.hpp"
#include "yaml_json.hpp"

#include <array>

namespace dsagent {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, 7> kTaskFields = {
    "task_description", "data_description", "data_location",        "metrics",
    "inputs",           "outputs",          "special_instructions",
};

[[noreturn]] void bad(const std::string& field, const std::string& message)
{
    throw Error(ErrorCode::InvalidSpec, field + ": " + message);
}

std::string text_of(const ojson& v, const std::string& field)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_null()) {
        return {};
    }
    if (v.is_number() || v.is_boolean()) {
        return v.dump();
    }
    bad(field, "expected text");
}

std::string* task_field(ProjectSpec& spec, std::string_view name)
{
    if (name == "task_description") return &spec.task_description;
    if (name == "data_description") return &spec.data_description;
    if (name == "data_location") return &spec.data_location;
    if (name == "metrics") return &spec.metrics;
    if (name == "inputs") return &spec.inputs;
    if (name == "outputs") return &spec.outputs;
    if (name == "special_instructions") return &spec.special_instructions;
    return nullptr;
}

void read_task_fields(ProjectSpec& spec, const ojson& section, const std::string& prefix)
{
    for (const auto& [key, value] : section.items()) {
        auto* target = task_field(spec, key);
        if (target == nullptr) {
            bad(prefix + key, "unknown field (expected one of task_description, data_description, "
                              "data_location, metrics, inputs, outputs, special_instructions)");
        }
        *target = text_of(value, prefix + key);
    }
}

void read_general(ProjectSpec& spec, const ojson& general)
{
    if (general.is_null()) {
        return;
    }
    if (general.is_object()) {
        for (const auto& [key, value] : general.items()) {
            spec.general_instructions.emplace_back(key, text_of(value, "general_instructions." + key));
        }
        return;
    }
    if (general.is_array()) {
        for (std::size_t i = 0; i < general.size(); ++i) {
            const auto& item = general[i];
            const auto at = "general_instructions[" + std::to_string(i) + "]";
            if (!item.is_object() || !item.contains("key")) {
                bad(at, "expected {key, value}");
            }
            spec.general_instructions.emplace_back(text_of(item["key"], at + ".key"),
                                                   item.contains("value") ? text_of(item["value"], at + ".value")
                                                                          : std::string{});
        }
        return;
    }
    bad("general_instructions", "expected a mapping");
}

} // namespace

ProjectSpec parse_spec_file(const std::string& text)
{
    ojson doc;
    try {
        doc = detail::parse_yaml(text, "spec file");
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidSpec, e.detail());
    }
    if (!doc.is_object()) {
        throw Error(ErrorCode::InvalidSpec, "spec file must be a mapping with general_instructions and "
                                            "task_specific_instructions sections");
    }
    ProjectSpec spec;
    for (const auto& [key, value] : doc.items()) {
        if (key == "general_instructions") {
            read_general(spec, value);
        } else if (key == "task_specific_instructions") {
            if (!value.is_object()) {
                bad(key, "expected a mapping");
            }
            read_task_fields(spec, value, "task_specific_instructions.");
        } else if (task_field(spec, key) != nullptr) {
            *task_field(spec, key) = text_of(value, key);
        } else {
            bad(key, "unknown section");
        }
    }
    validate(spec);
    return spec;
}

ProjectSpec load_spec_file(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidSpec, e.detail());
    }
    return parse_spec_file(text);
}

std::filesystem::path resolve_data_path(const std::string& data_location, const std::filesystem::path& base_dir)
{
    if (data_location.empty() || data_location.find("://") != std::string::npos) {
        return local_data_path(data_location);
    }
    const std::filesystem::path p(data_location);
    return std::filesystem::absolute(p.is_absolute() ? p : base_dir / p).lexically_normal();
}

} // namespace dsagent
