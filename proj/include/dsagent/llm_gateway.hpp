// SPDX-License-Identifier: Apache-2.0
//
// Uniform chat-completion interface over hosted, local and scripted backends.
#pragma once

#include "dsagent/domain.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dsagent {

struct ToolCall {
    std::string name;
    std::string arguments_json;
    bool operator==(const ToolCall&) const = default;
};

struct ChatRequest {
    AgentRole role = AgentRole::Orchestrator;
    std::string system_prompt;
    /// Output of the history renderer; identical for all three roles.
    std::string rendered_context;
    /// Role-specific ask appended after the context (spec, purpose, rewrite
    /// request, corrective instruction).
    std::string instruction;
    /// Tool definitions; present iff role is Orchestrator in native mode.
    std::optional<nlohmann::json> structured_schema;
    double temperature = 0.0;
    /// Overrides the backend's default model when non-empty.
    std::string model;
};

struct ChatResponse {
    std::string raw_text;
    std::optional<ToolCall> native_tool_call;
    std::string model_id;
    std::int64_t latency_ms = 0;

    bool operator==(const ChatResponse&) const = default;
};

struct DiagnosticReport {
    std::string backend_id;
    bool reachable = false;
    /// nullopt when authentication could not be determined.
    std::optional<bool> auth;
    std::int64_t latency_ms = 0;
    std::string detail;

    [[nodiscard]] bool ok() const noexcept { return reachable && auth.value_or(false); }
    [[nodiscard]] nlohmann::json to_json() const;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    /// Never throws; failures are report contents.
    virtual DiagnosticReport diagnose() = 0;
};

// ---------------------------------------------------------------------------

using ScriptedReply = std::variant<std::string, ToolCall>;

/// Replays canned replies in order. Records every request it receives.
class ScriptedBackend final : public ChatBackend {
public:
    /// Throws EmptyScript.
    explicit ScriptedBackend(std::vector<ScriptedReply> replies, std::string model_id = "scripted");

    ChatResponse complete(const ChatRequest& request) override;
    DiagnosticReport diagnose() override;

    [[nodiscard]] std::size_t remaining() const;
    [[nodiscard]] std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mutex_;
    std::deque<ScriptedReply> replies_;
    std::vector<ChatRequest> requests_;
    std::string model_id_;
};

/// Reads a script: a JSON array whose entries are either strings (raw text)
/// or {"tool_call": {"name": ..., "arguments": {...}}}.
std::vector<ScriptedReply> parse_script(const nlohmann::json& script);

// ---------------------------------------------------------------------------

struct OpenAiBackendOptions {
    /// e.g. "https://api.openai.com/v1" or "http://localhost:11434/v1".
    std::string base_url;
    std::string model;
    /// Name of the environment variable holding the bearer token; empty for
    /// servers without authentication.
    std::string api_key_env;
    std::chrono::milliseconds timeout{120000};
};

/// OpenAI-compatible chat-completions client (hosted API or local server).
class OpenAiBackend final : public ChatBackend {
public:
    explicit OpenAiBackend(OpenAiBackendOptions options);

    ChatResponse complete(const ChatRequest& request) override;
    DiagnosticReport diagnose() override;

    /// Request body for `request`; exposed for tests.
    [[nodiscard]] nlohmann::json build_body(const ChatRequest& request) const;
    /// Parses a chat-completions response body. Throws BackendError.
    static ChatResponse parse_body(const nlohmann::json& body);

private:
    [[nodiscard]] std::optional<std::string> api_key() const;

    OpenAiBackendOptions options_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

// ---------------------------------------------------------------------------

/// Registry of backends plus the role -> backend binding. Stateless apart
/// from registration; safe to call concurrently.
class LlmGateway {
public:
    void register_backend(std::string backend_id, std::shared_ptr<ChatBackend> backend);
    /// Registers a ScriptedBackend and returns its generated id.
    std::string script_backend(std::vector<ScriptedReply> replies);
    void bind(AgentRole role, std::string backend_id);

    [[nodiscard]] std::shared_ptr<ChatBackend> backend(const std::string& backend_id) const;
    [[nodiscard]] std::optional<std::string> bound(AgentRole role) const;
    [[nodiscard]] std::vector<std::string> backend_ids() const;

    /// Routes by request.role. Throws UnknownBackend when the role is unbound.
    ChatResponse complete(const ChatRequest& request) const;
    DiagnosticReport diagnose(const std::string& backend_id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
    std::map<AgentRole, std::string> bindings_;
    int scripted_counter_ = 0;
};

} // namespace dsagent
