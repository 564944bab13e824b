// SPDX-License-Identifier: Apache-2.0
#include "dsagent/codec.hpp"

#include <limits>
#include <set>

namespace dsagent::codec {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg)
{
    throw SchemaError(path, msg);
}

const json& member(const json& obj, const std::string& key, const std::string& path)
{
    if (!obj.is_object()) {
        fail(path, "expected an object");
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        fail(path + "/" + key, "required field is missing");
    }
    return *it;
}

std::string get_string(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = member(obj, key, path);
    if (!v.is_string()) {
        fail(path + "/" + key, "expected a string");
    }
    return v.get<std::string>();
}

std::int64_t get_int(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = member(obj, key, path);
    if (!v.is_number_integer()) {
        fail(path + "/" + key, "expected an integer");
    }
    return v.get<std::int64_t>();
}

int get_int32(const json& obj, const std::string& key, const std::string& path)
{
    const auto v = get_int(obj, key, path);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        fail(path + "/" + key, "integer out of range");
    }
    return static_cast<int>(v);
}

double get_number(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = member(obj, key, path);
    if (!v.is_number()) {
        fail(path + "/" + key, "expected a number");
    }
    return v.get<double>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = member(obj, key, path);
    if (!v.is_boolean()) {
        fail(path + "/" + key, "expected a boolean");
    }
    return v.get<bool>();
}

const json& get_array(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = member(obj, key, path);
    if (!v.is_array()) {
        fail(path + "/" + key, "expected an array");
    }
    return v;
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& path)
{
    if (!obj.is_object()) {
        fail(path, "expected an object");
    }
    for (const auto& [key, _] : obj.items()) {
        if (!known.contains(key)) {
            fail(path + "/" + key, "unknown field");
        }
    }
}

const std::set<std::string> kSpecFields{"general_instructions", "task_description", "data_description",
                                        "data_location", "metrics", "inputs", "outputs", "special_instructions"};

std::string role_key(AgentRole role)
{
    return std::string(to_string(role));
}

AgentSettings agent_from_json(const json& j, const std::string& path)
{
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
    reject_unknown(j, {"model", "temperature"}, path);
    return AgentSettings{get_string(j, "model", path), get_number(j, "temperature", path)};
}

} // namespace

json to_json(const ProjectSpec& spec)
{
    json general = json::array();
    for (const auto& [key, value] : spec.general_instructions) {
        general.push_back({{"key", key}, {"value", value}});
    }
    return {
        {"general_instructions", general},
        {"task_description", spec.task_description},
        {"data_description", spec.data_description},
        {"data_location", spec.data_location},
        {"metrics", spec.metrics},
        {"inputs", spec.inputs},
        {"outputs", spec.outputs},
        {"special_instructions", spec.special_instructions},
    };
}

json to_json(const RunConfig& config)
{
    json agents = json::object();
    for (auto role : kAllRoles) {
        const auto& a = config.agent(role);
        agents[role_key(role)] = {{"model", a.model}, {"temperature", a.temperature}};
    }
    return {
        {"max_steps", config.max_steps},
        {"max_code_retries", config.max_code_retries},
        {"history_char_limit", config.history_char_limit},
        {"head_tail_lines", config.head_tail_lines},
        {"agents", agents},
        {"tool_mode", to_string(config.tool_mode)},
        {"cell_timeout_ms", config.cell_timeout_ms},
        {"network_enabled", config.network_enabled},
    };
}

json to_json(const ExecutionResult& result)
{
    return {
        {"attempt", result.attempt},
        {"status", to_string(result.status)},
        {"stdout", result.stdout_text},
        {"stderr", result.stderr_text},
        {"duration_ms", result.duration_ms},
        {"artifacts_written", result.artifacts_written},
    };
}

json to_json(const Cell& cell)
{
    json results = json::array();
    for (const auto& r : cell.results) {
        results.push_back(to_json(r));
    }
    return {
        {"id", cell.id},
        {"kind", to_string(cell.kind)},
        {"ordinal", cell.ordinal},
        {"source", cell.source},
        {"purpose_or_spec", cell.purpose_or_spec},
        {"results", results},
        {"created_at_ms", cell.created_at_ms},
    };
}

json to_json(const TraceRecord& record)
{
    return {{"time_ms", record.time_ms}, {"event", record.event}, {"data", record.data}};
}

ProjectSpec spec_from_json(const json& j, const std::string& path)
{
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
    reject_unknown(j, kSpecFields, path);
    ProjectSpec spec;
    auto opt_string = [&](const char* key) -> std::string {
        return j.contains(key) ? get_string(j, key, path) : std::string{};
    };
    if (j.contains("general_instructions")) {
        const auto& general = get_array(j, "general_instructions", path);
        for (std::size_t i = 0; i < general.size(); ++i) {
            const auto at = path + "/general_instructions/" + std::to_string(i);
            reject_unknown(general[i], {"key", "value"}, at);
            spec.general_instructions.emplace_back(get_string(general[i], "key", at),
                                                   get_string(general[i], "value", at));
        }
    }
    spec.task_description = get_string(j, "task_description", path);
    spec.data_description = opt_string("data_description");
    spec.data_location = opt_string("data_location");
    spec.metrics = opt_string("metrics");
    spec.inputs = opt_string("inputs");
    spec.outputs = opt_string("outputs");
    spec.special_instructions = opt_string("special_instructions");
    return spec;
}

RunConfig config_from_json(const json& j, const std::string& path)
{
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
    reject_unknown(j,
                   {"max_steps", "max_code_retries", "history_char_limit", "head_tail_lines", "agents", "tool_mode",
                    "cell_timeout_ms", "network_enabled"},
                   path);
    RunConfig c;
    c.max_steps = get_int32(j, "max_steps", path);
    c.max_code_retries = get_int32(j, "max_code_retries", path);
    c.history_char_limit = get_int32(j, "history_char_limit", path);
    c.head_tail_lines = get_int32(j, "head_tail_lines", path);
    const auto& agents = member(j, "agents", path);
    reject_unknown(agents, {"orchestrator", "text", "code"}, path + "/agents");
    for (auto role : kAllRoles) {
        c.agent(role) = agent_from_json(member(agents, role_key(role), path + "/agents"),
                                        path + "/agents/" + role_key(role));
    }
    const auto mode = get_string(j, "tool_mode", path);
    const auto parsed = parse_tool_mode(mode);
    if (!parsed) {
        fail(path + "/tool_mode", "expected 'native' or 'emulated'");
    }
    c.tool_mode = *parsed;
    c.cell_timeout_ms = get_int(j, "cell_timeout_ms", path);
    c.network_enabled = get_bool(j, "network_enabled", path);
    return c;
}

void apply_config_overrides(RunConfig& c, const json& j, const std::string& path)
{
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        const json one = {{key, value}};
        if (key == "max_steps") {
            c.max_steps = get_int32(one, key, path);
        } else if (key == "max_code_retries") {
            c.max_code_retries = get_int32(one, key, path);
        } else if (key == "history_char_limit") {
            c.history_char_limit = get_int32(one, key, path);
        } else if (key == "head_tail_lines") {
            c.head_tail_lines = get_int32(one, key, path);
        } else if (key == "cell_timeout_ms") {
            c.cell_timeout_ms = get_int(one, key, path);
        } else if (key == "network_enabled") {
            c.network_enabled = get_bool(one, key, path);
        } else if (key == "tool_mode") {
            const auto mode = parse_tool_mode(get_string(one, key, path));
            if (!mode) {
                fail(path + "/tool_mode", "expected 'native' or 'emulated'");
            }
            c.tool_mode = *mode;
        } else if (key == "agents") {
            if (!value.is_object()) {
                fail(path + "/agents", "expected an object");
            }
            for (const auto& [role_name, settings] : value.items()) {
                const auto role = parse_agent_role(role_name);
                const auto at = path + "/agents/" + role_name;
                if (!role) {
                    fail(at, "unknown agent role");
                }
                if (!settings.is_object()) {
                    fail(at, "expected an object");
                }
                reject_unknown(settings, {"model", "temperature"}, at);
                if (settings.contains("model")) {
                    c.agent(*role).model = get_string(settings, "model", at);
                }
                if (settings.contains("temperature")) {
                    c.agent(*role).temperature = get_number(settings, "temperature", at);
                }
            }
        } else {
            bool matched = false;
            for (auto role : kAllRoles) {
                const auto prefix = role_key(role) + "_";
                if (key == prefix + "model") {
                    c.agent(role).model = get_string(one, key, path);
                    matched = true;
                } else if (key == prefix + "temperature") {
                    c.agent(role).temperature = get_number(one, key, path);
                    matched = true;
                }
            }
            if (!matched) {
                fail(path + "/" + key, "unknown field");
            }
        }
    }
}

ExecutionResult result_from_json(const json& j, const std::string& path)
{
    reject_unknown(j, {"attempt", "status", "stdout", "stderr", "duration_ms", "artifacts_written"}, path);
    ExecutionResult r;
    r.attempt = get_int32(j, "attempt", path);
    const auto status = parse_exec_status(get_string(j, "status", path));
    if (!status) {
        fail(path + "/status", "expected success, error or timeout");
    }
    r.status = *status;
    r.stdout_text = get_string(j, "stdout", path);
    r.stderr_text = get_string(j, "stderr", path);
    r.duration_ms = get_int(j, "duration_ms", path);
    const auto& artifacts = get_array(j, "artifacts_written", path);
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        if (!artifacts[i].is_string()) {
            fail(path + "/artifacts_written/" + std::to_string(i), "expected a string");
        }
        r.artifacts_written.push_back(artifacts[i].get<std::string>());
    }
    return r;
}

Cell cell_from_json(const json& j, const std::string& path)
{
    reject_unknown(j, {"id", "kind", "ordinal", "source", "purpose_or_spec", "results", "created_at_ms"}, path);
    Cell c;
    c.id = get_int(j, "id", path);
    const auto kind = parse_cell_kind(get_string(j, "kind", path));
    if (!kind) {
        fail(path + "/kind", "expected text, code or finish");
    }
    c.kind = *kind;
    c.ordinal = get_int32(j, "ordinal", path);
    c.source = get_string(j, "source", path);
    c.purpose_or_spec = get_string(j, "purpose_or_spec", path);
    const auto& results = get_array(j, "results", path);
    for (std::size_t i = 0; i < results.size(); ++i) {
        c.results.push_back(result_from_json(results[i], path + "/results/" + std::to_string(i)));
    }
    c.created_at_ms = get_int(j, "created_at_ms", path);
    return c;
}

TraceRecord trace_from_json(const json& j, const std::string& path)
{
    reject_unknown(j, {"time_ms", "event", "data"}, path);
    TraceRecord t;
    t.time_ms = get_int(j, "time_ms", path);
    t.event = get_string(j, "event", path);
    t.data = member(j, "data", path);
    return t;
}

} // namespace dsagent::codec
