// SPDX-License-Identifier: Apache-2.0
#include "dsagent/service_config.hpp"

#include "dsagent/codec.hpp"
#include "dsagent/error.hpp"
#include "yaml_json.hpp"

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace dsagent {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& message)
{
    throw Error(ErrorCode::InvalidConfig, field + ": " + message);
}

void only(const ojson& obj, const std::set<std::string>& known, const std::string& where)
{
    if (!obj.is_object()) {
        bad(where, "expected a mapping");
    }
    for (const auto& [key, value] : obj.items()) {
        if (!known.contains(key)) {
            bad(where.empty() ? key : where + "." + key, "unknown field");
        }
    }
}

std::string str(const ojson& v, const std::string& field)
{
    if (!v.is_string()) {
        bad(field, "expected text");
    }
    return v.get<std::string>();
}

std::int64_t integer(const ojson& v, const std::string& field)
{
    if (!v.is_number_integer()) {
        bad(field, "expected an integer");
    }
    return v.get<std::int64_t>();
}

fs::path relative_to(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::pair<std::string, int> parse_listen(const std::string& s)
{
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) {
        bad("listen", "expected host:port");
    }
    try {
        const int port = std::stoi(s.substr(colon + 1));
        if (port < 0 || port > 65535) {
            bad("listen", "port out of range");
        }
        return {s.substr(0, colon), port};
    } catch (const std::logic_error&) {
        bad("listen", "expected host:port");
    }
}

void read_sandbox(SandboxOptions& sb, const ojson& j, const fs::path& base)
{
    only(j, {"runtime", "image", "docker_binary", "python", "kernel", "work_root", "startup_timeout_ms"}, "sandbox");
    for (const auto& [key, value] : j.items()) {
        const auto field = "sandbox." + key;
        if (key == "runtime") {
            const auto kind = parse_runtime_kind(str(value, field));
            if (!kind) {
                bad(field, "expected namespace, docker or process");
            }
            sb.runtime = *kind;
        } else if (key == "image") {
            sb.image = str(value, field);
        } else if (key == "docker_binary") {
            sb.docker_binary = str(value, field);
        } else if (key == "python") {
            sb.python = str(value, field);
        } else if (key == "kernel") {
            sb.kernel_path = relative_to(base, str(value, field));
        } else if (key == "work_root") {
            sb.work_root = relative_to(base, str(value, field));
        } else if (key == "startup_timeout_ms") {
            sb.startup_timeout = std::chrono::milliseconds(integer(value, field));
        }
    }
    if (sb.runtime == RuntimeKind::Namespace && sb.image != "host" && !fs::path(sb.image).is_absolute()) {
        sb.image = relative_to(base, sb.image).string();
    }
}

void read_backend(BackendDefinition& def, const ojson& j, const std::string& where, const fs::path& base)
{
    only(j, {"kind", "base_url", "model", "api_key_env", "tool_mode", "timeout_ms", "script", "script_file"}, where);
    for (const auto& [key, value] : j.items()) {
        const auto field = where + "." + key;
        if (key == "kind") {
            def.kind = str(value, field);
            if (def.kind != "openai" && def.kind != "scripted") {
                bad(field, "expected openai or scripted");
            }
        } else if (key == "base_url") {
            def.base_url = str(value, field);
        } else if (key == "model") {
            def.model = str(value, field);
        } else if (key == "api_key_env") {
            def.api_key_env = value.is_null() ? std::string{} : str(value, field);
        } else if (key == "tool_mode") {
            const auto mode = parse_tool_mode(str(value, field));
            if (!mode) {
                bad(field, "expected native or emulated");
            }
            def.tool_mode = *mode;
        } else if (key == "timeout_ms") {
            def.timeout = std::chrono::milliseconds(integer(value, field));
        } else if (key == "script") {
            def.script = json::parse(value.dump());
        } else if (key == "script_file") {
            const auto path = relative_to(base, str(value, field));
            def.script = json::parse(detail::parse_yaml(detail::read_text_file(path), path.string()).dump());
        }
    }
    if (def.kind == "scripted") {
        try {
            if (parse_script(def.script).empty()) {
                bad(where + ".script", "a scripted backend needs at least one reply");
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidConfig) {
                throw;
            }
            bad(where + ".script", e.detail());
        }
    }
}

} // namespace

fs::path default_kernel_path()
{
    if (const char* env = std::getenv("DSAGENT_KERNEL_PATH"); env != nullptr && *env != '\0') {
        return env;
    }
#ifdef DSAGENT_KERNEL_PATH
    return DSAGENT_KERNEL_PATH;
#else
    return "sandbox/cell_kernel.py";
#endif
}

ServiceConfig ServiceConfig::defaults()
{
    ServiceConfig c;
    c.sandbox.kernel_path = default_kernel_path();
    c.sandbox.work_root = c.assets_root / ".sandbox";
    return c;
}

ServiceConfig ServiceConfig::parse(const std::string& text, const fs::path& base_dir)
{
    auto c = defaults();
    const auto doc = detail::parse_yaml(text, "service config");
    if (doc.is_null()) {
        return c;
    }
    only(doc, {"listen", "assets_root", "sandbox", "backends", "run"}, "");
    bool work_root_set = false;
    if (doc.contains("listen")) {
        std::tie(c.listen_host, c.listen_port) = parse_listen(str(doc["listen"], "listen"));
    }
    if (doc.contains("assets_root")) {
        c.assets_root = relative_to(base_dir, str(doc["assets_root"], "assets_root"));
    }
    if (doc.contains("sandbox")) {
        read_sandbox(c.sandbox, doc["sandbox"], base_dir);
        work_root_set = doc["sandbox"].contains("work_root");
    }
    if (!work_root_set) {
        c.sandbox.work_root = c.assets_root / ".sandbox";
    }
    if (doc.contains("backends")) {
        const auto& backends = doc["backends"];
        only(backends, {"orchestrator", "text", "code"}, "backends");
        for (auto role : kAllRoles) {
            const std::string key(to_string(role));
            if (!backends.contains(key)) {
                bad("backends." + key, "every agent role needs exactly one backend");
            }
            read_backend(c.backend(role), backends[key], "backends." + key, base_dir);
        }
    }
    if (doc.contains("run")) {
        try {
            codec::apply_config_overrides(c.run_defaults, json::parse(doc["run"].dump()), "/run");
            validate(c.run_defaults);
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidConfig, e.detail());
        }
    }
    return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path)
{
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, e.detail());
    }
    return parse(text, fs::absolute(path).parent_path());
}

RunConfig effective_run_config(const ServiceConfig& config)
{
    auto run = config.run_defaults;
    if (const auto& mode = config.backend(AgentRole::Orchestrator).tool_mode) {
        run.tool_mode = *mode;
    }
    return run;
}

std::unique_ptr<LlmGateway> build_gateway(const ServiceConfig& config)
{
    auto gateway = std::make_unique<LlmGateway>();
    for (auto role : kAllRoles) {
        const auto& def = config.backend(role);
        const std::string id(to_string(role));
        if (def.kind == "scripted") {
            gateway->register_backend(id, std::make_shared<ScriptedBackend>(parse_script(def.script), "scripted-" + id));
        } else {
            gateway->register_backend(
                id, std::make_shared<OpenAiBackend>(OpenAiBackendOptions{def.base_url, def.model, def.api_key_env, def.timeout}));
        }
        gateway->bind(role, id);
    }
    return gateway;
}

// --- diagnostics -------------------------------------------------------------

bool DiagnosticsReport::ok() const
{
    for (const auto& [role, report] : backends) {
        if (!report.ok()) {
            return false;
        }
    }
    return runtime.ok && assets.ok;
}

json DiagnosticsReport::to_json() const
{
    json j;
    j["ok"] = ok();
    j["backends"] = json::object();
    for (const auto& [role, report] : backends) {
        auto r = report.to_json();
        r["ok"] = report.ok();
        j["backends"][std::string(to_string(role))] = r;
    }
    j["runtime"] = {{"ok", runtime.ok}, {"detail", runtime.detail}};
    j["assets"] = {{"ok", assets.ok}, {"detail", assets.detail}};
    return j;
}

std::string DiagnosticsReport::to_text() const
{
    std::ostringstream out;
    auto mark = [](bool ok) { return ok ? "ok  " : "FAIL"; };
    for (const auto& [role, report] : backends) {
        out << mark(report.ok()) << " backend " << to_string(role) << ": reachable="
            << (report.reachable ? "yes" : "no") << " auth="
            << (report.auth ? (*report.auth ? "yes" : "no") : "unknown") << " latency=" << report.latency_ms
            << "ms";
        if (!report.detail.empty()) {
            out << " (" << report.detail << ")";
        }
        out << "\n";
    }
    out << mark(runtime.ok) << " sandbox runtime: " << runtime.detail << "\n";
    out << mark(assets.ok) << " assets directory: " << assets.detail << "\n";
    return out.str();
}

DiagnosticsReport run_diagnostics(const ServiceConfig& config, const LlmGateway& gateway)
{
    DiagnosticsReport report;
    for (auto role : kAllRoles) {
        DiagnosticReport r;
        const auto id = gateway.bound(role);
        if (!id) {
            r.detail = "no backend bound";
        } else {
            try {
                r = gateway.diagnose(*id);
            } catch (const std::exception& e) {
                r.backend_id = *id;
                r.detail = e.what();
            }
        }
        report.backends.emplace_back(role, r);
    }

    try {
        probe_runtime(config.sandbox);
        report.runtime = {true, std::string(to_string(config.sandbox.runtime)) + " runtime, image " + config.sandbox.image};
    } catch (const std::exception& e) {
        report.runtime = {false, e.what()};
    }

    std::error_code ec;
    fs::create_directories(config.assets_root, ec);
    const auto probe = config.assets_root / (".write-probe-" + std::to_string(::getpid()));
    {
        std::ofstream out(probe);
        out << "probe";
        report.assets.ok = static_cast<bool>(out);
    }
    fs::remove(probe, ec);
    report.assets.detail = config.assets_root.string() + (report.assets.ok ? " is writable" : " is not writable");
    return report;
}

DiagnosticsReport run_diagnostics(const ServiceConfig& config)
{
    try {
        return run_diagnostics(config, *build_gateway(config));
    } catch (const std::exception& e) {
        DiagnosticsReport report;
        for (auto role : kAllRoles) {
            DiagnosticReport r;
            r.detail = e.what();
            report.backends.emplace_back(role, r);
        }
        report.runtime = {false, "not probed"};
        report.assets = {false, "not probed"};
        return report;
    }
}

} // namespace dsagent
