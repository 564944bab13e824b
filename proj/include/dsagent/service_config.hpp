// SPDX-License-Identifier: Apache-2.0
//
// Process configuration shared by the CLI and the HTTP service, read from
// YAML or JSON:
//
//   listen: 127.0.0.1:8765
//   assets_root: ./assets
//   sandbox: {runtime: namespace, image: host, python: python3}
//   backends:
//     orchestrator: {kind: openai, base_url: https://api.openai.com/v1,
//                    model: gpt-4o, api_key_env: OPENAI_API_KEY, tool_mode: native}
//     text:         {kind: openai, base_url: http://localhost:8000/v1, model: qwen3}
//     code:         {kind: scripted, script_file: code.json}
//   run: {max_steps: 30, max_code_retries: 3}
//
// Credentials are only ever named here, never stored.
#pragma once

#include "dsagent/domain.hpp"
#include "dsagent/llm_gateway.hpp"
#include "dsagent/sandbox.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace dsagent {

struct BackendDefinition {
    /// "openai" (any OpenAI-compatible server) or "scripted".
    std::string kind = "openai";
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o";
    std::string api_key_env = "OPENAI_API_KEY";
    /// Only meaningful for the orchestrator; overrides run.tool_mode.
    std::optional<ToolMode> tool_mode;
    std::chrono::milliseconds timeout{120000};
    /// Scripted replies, see parse_script().
    nlohmann::json script = nlohmann::json::array();
};

struct ServiceConfig {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8765;
    std::filesystem::path assets_root = "assets";
    SandboxOptions sandbox;
    /// Indexed by AgentRole.
    std::array<BackendDefinition, 3> backends;
    RunConfig run_defaults;

    [[nodiscard]] const BackendDefinition& backend(AgentRole role) const
    {
        return backends[static_cast<std::size_t>(role)];
    }
    BackendDefinition& backend(AgentRole role) { return backends[static_cast<std::size_t>(role)]; }

    /// Built-in defaults: OpenAI for every role, namespace sandbox.
    static ServiceConfig defaults();
    /// Relative paths in `text` resolve against `base_dir`. Throws
    /// InvalidConfig.
    static ServiceConfig parse(const std::string& text, const std::filesystem::path& base_dir);
    static ServiceConfig load(const std::filesystem::path& path);
};

/// run_defaults with the orchestrator backend's tool_mode applied. Models
/// stay empty so each backend uses its configured model.
RunConfig effective_run_config(const ServiceConfig& config);

/// $DSAGENT_KERNEL_PATH if set, else the interpreter bootstrap of the source
/// tree the project was built from.
std::filesystem::path default_kernel_path();

/// A fresh gateway with one backend per role, ids "orchestrator", "text",
/// "code". Scripted backends start from the top of their script, so every
/// session gets its own gateway.
std::unique_ptr<LlmGateway> build_gateway(const ServiceConfig& config);

struct ProbeResult {
    bool ok = false;
    std::string detail;
};

struct DiagnosticsReport {
    /// Per role, in AgentRole order.
    std::vector<std::pair<AgentRole, DiagnosticReport>> backends;
    ProbeResult runtime;
    ProbeResult assets;

    [[nodiscard]] bool ok() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] std::string to_text() const;
};

/// Never throws; every failure is part of the report.
DiagnosticsReport run_diagnostics(const ServiceConfig& config, const LlmGateway& gateway);
DiagnosticsReport run_diagnostics(const ServiceConfig& config);

} // namespace dsagent
