// SPDX-License-Identifier: Apache-2.0
#include "dsagent/llm_gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <regex>

namespace dsagent {

using nlohmann::json;

json DiagnosticReport::to_json() const
{
    json j;
    j["backend_id"] = backend_id;
    j["reachable"] = reachable;
    j["auth"] = auth ? json(*auth) : json(nullptr);
    j["latency_ms"] = latency_ms;
    j["detail"] = detail;
    return j;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptedReply> replies, std::string model_id)
    : replies_(replies.begin(), replies.end()), model_id_(std::move(model_id))
{
    if (replies_.empty()) {
        throw Error(ErrorCode::EmptyScript, "a scripted backend needs at least one reply");
    }
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request)
{
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (replies_.empty()) {
        throw Error(ErrorCode::BackendError, "scripted backend '" + model_id_ + "' has no replies left");
    }
    auto reply = std::move(replies_.front());
    replies_.pop_front();

    ChatResponse response;
    response.model_id = model_id_;
    if (auto* text = std::get_if<std::string>(&reply)) {
        response.raw_text = std::move(*text);
    } else {
        response.native_tool_call = std::get<ToolCall>(std::move(reply));
    }
    return response;
}

DiagnosticReport ScriptedBackend::diagnose()
{
    std::lock_guard lock(mutex_);
    return DiagnosticReport{"", true, true, 0, std::to_string(replies_.size()) + " scripted replies left"};
}

std::size_t ScriptedBackend::remaining() const
{
    std::lock_guard lock(mutex_);
    return replies_.size();
}

std::vector<ChatRequest> ScriptedBackend::requests() const
{
    std::lock_guard lock(mutex_);
    return requests_;
}

std::vector<ScriptedReply> parse_script(const json& script)
{
    if (!script.is_array()) {
        throw Error(ErrorCode::InvalidConfig, "a script must be a JSON array");
    }
    std::vector<ScriptedReply> replies;
    for (const auto& entry : script) {
        if (entry.is_string()) {
            replies.emplace_back(entry.get<std::string>());
        } else if (entry.is_object() && entry.contains("tool_call")) {
            const auto& tc = entry.at("tool_call");
            const auto& args = tc.value("arguments", json::object());
            replies.emplace_back(ToolCall{tc.at("name").get<std::string>(),
                                          args.is_string() ? args.get<std::string>() : args.dump()});
        } else {
            throw Error(ErrorCode::InvalidConfig, "script entries are strings or {\"tool_call\": ...} objects");
        }
    }
    return replies;
}

// ---------------------------------------------------------------------------
// OpenAI-compatible backend
// ---------------------------------------------------------------------------

namespace {

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since).count();
}

httplib::Client make_client(const std::string& scheme_host_port, std::chrono::milliseconds timeout)
{
    httplib::Client cli(scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout).count();
    cli.set_connection_timeout(std::min<std::int64_t>(secs, 10), 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    return cli;
}

} // namespace

OpenAiBackend::OpenAiBackend(OpenAiBackendOptions options) : options_(std::move(options))
{
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(options_.base_url, m, url_re)) {
        throw Error(ErrorCode::InvalidConfig, "backend base_url must be an http(s) URL: '" + options_.base_url + "'");
    }
    scheme_host_port_ = m[1].str();
    path_prefix_ = m[2].str();
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

std::optional<std::string> OpenAiBackend::api_key() const
{
    if (options_.api_key_env.empty()) {
        return std::string{};
    }
    const char* value = std::getenv(options_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
        return std::nullopt;
    }
    return std::string(value);
}

json OpenAiBackend::build_body(const ChatRequest& request) const
{
    json body;
    body["model"] = request.model.empty() ? options_.model : request.model;
    std::string user = request.rendered_context;
    if (!request.instruction.empty()) {
        if (!user.empty()) {
            user += "\n\n";
        }
        user += request.instruction;
    }
    body["messages"] = json::array({
        {{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", user}},
    });
    body["temperature"] = request.temperature;
    if (request.structured_schema) {
        body["tools"] = *request.structured_schema;
        body["tool_choice"] = "required";
    }
    return body;
}

ChatResponse OpenAiBackend::parse_body(const json& body)
{
    try {
        const auto& message = body.at("choices").at(0).at("message");
        ChatResponse response;
        response.model_id = body.value("model", "");
        if (message.contains("content") && message["content"].is_string()) {
            response.raw_text = message["content"].get<std::string>();
        }
        if (message.contains("tool_calls") && message["tool_calls"].is_array() && !message["tool_calls"].empty()) {
            const auto& fn = message["tool_calls"][0].at("function");
            const auto& args = fn.value("arguments", json("{}"));
            response.native_tool_call =
                ToolCall{fn.at("name").get<std::string>(), args.is_string() ? args.get<std::string>() : args.dump()};
        }
        if (response.raw_text.empty() && !response.native_tool_call) {
            throw Error(ErrorCode::BackendError, "completion carries neither content nor a tool call");
        }
        return response;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendError, std::string("malformed completion body: ") + e.what());
    }
}

ChatResponse OpenAiBackend::complete(const ChatRequest& request)
{
    const auto key = api_key();
    if (!key) {
        throw Error(ErrorCode::AuthError, "environment variable " + options_.api_key_env + " is not set");
    }
    httplib::Headers headers;
    if (!key->empty()) {
        headers.emplace("Authorization", "Bearer " + *key);
    }
    const auto payload = build_body(request).dump();
    const auto path = path_prefix_ + "/chat/completions";

    const auto started = std::chrono::steady_clock::now();
    httplib::Result res;
    for (int attempt = 0; attempt < 2 && !res; ++attempt) {
        auto cli = make_client(scheme_host_port_, options_.timeout);
        res = cli.Post(path, headers, payload, "application/json");
    }
    if (!res) {
        throw Error(ErrorCode::TransportError,
                    scheme_host_port_ + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::AuthError, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::BackendError, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendError, std::string("completion body is not JSON: ") + e.what());
    }
    auto response = parse_body(body);
    if (response.model_id.empty()) {
        response.model_id = request.model.empty() ? options_.model : request.model;
    }
    response.latency_ms = elapsed_ms(started);
    return response;
}

DiagnosticReport OpenAiBackend::diagnose()
{
    DiagnosticReport report;
    const auto key = api_key();
    httplib::Headers headers;
    if (key && !key->empty()) {
        headers.emplace("Authorization", "Bearer " + *key);
    }
    if (!key) {
        report.auth = false;
    }
    const auto started = std::chrono::steady_clock::now();
    try {
        auto cli = make_client(scheme_host_port_, std::min(options_.timeout, std::chrono::milliseconds(10000)));
        auto res = cli.Get(path_prefix_ + "/models", headers);
        report.latency_ms = elapsed_ms(started);
        if (!res) {
            report.detail = scheme_host_port_ + " unreachable: " + httplib::to_string(res.error());
            if (!key) {
                report.detail += "; environment variable " + options_.api_key_env + " is not set";
            }
            return report;
        }
        report.reachable = true;
        if (!key) {
            report.detail = "environment variable " + options_.api_key_env + " is not set";
        } else if (res->status == 401 || res->status == 403) {
            report.auth = false;
            report.detail = "credentials rejected (HTTP " + std::to_string(res->status) + ")";
        } else if (res->status >= 200 && res->status < 300) {
            report.auth = true;
            report.detail = "ok";
        } else {
            report.detail = "unexpected HTTP " + std::to_string(res->status);
        }
    } catch (const std::exception& e) {
        report.detail = e.what();
    }
    return report;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

void LlmGateway::register_backend(std::string backend_id, std::shared_ptr<ChatBackend> backend)
{
    std::lock_guard lock(mutex_);
    backends_[std::move(backend_id)] = std::move(backend);
}

std::string LlmGateway::script_backend(std::vector<ScriptedReply> replies)
{
    auto backend = std::make_shared<ScriptedBackend>(std::move(replies));
    std::lock_guard lock(mutex_);
    auto id = "scripted-" + std::to_string(++scripted_counter_);
    backends_[id] = std::move(backend);
    return id;
}

void LlmGateway::bind(AgentRole role, std::string backend_id)
{
    std::lock_guard lock(mutex_);
    if (!backends_.contains(backend_id)) {
        throw Error(ErrorCode::UnknownBackend, "no backend registered as '" + backend_id + "'");
    }
    bindings_[role] = std::move(backend_id);
}

std::shared_ptr<ChatBackend> LlmGateway::backend(const std::string& backend_id) const
{
    std::lock_guard lock(mutex_);
    auto it = backends_.find(backend_id);
    return it == backends_.end() ? nullptr : it->second;
}

std::optional<std::string> LlmGateway::bound(AgentRole role) const
{
    std::lock_guard lock(mutex_);
    auto it = bindings_.find(role);
    if (it == bindings_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<std::string> LlmGateway::backend_ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : backends_) {
        ids.push_back(id);
    }
    return ids;
}

ChatResponse LlmGateway::complete(const ChatRequest& request) const
{
    std::shared_ptr<ChatBackend> backend;
    {
        std::lock_guard lock(mutex_);
        auto it = bindings_.find(request.role);
        if (it == bindings_.end()) {
            throw Error(ErrorCode::UnknownBackend,
                        "no backend bound to the " + std::string(to_string(request.role)) + " role");
        }
        backend = backends_.at(it->second);
    }
    return backend->complete(request);
}

DiagnosticReport LlmGateway::diagnose(const std::string& backend_id) const
{
    auto b = backend(backend_id);
    if (!b) {
        return DiagnosticReport{backend_id, false, std::nullopt, 0, "unknown backend"};
    }
    auto report = b->diagnose();
    report.backend_id = backend_id;
    return report;
}

} // namespace dsagent
