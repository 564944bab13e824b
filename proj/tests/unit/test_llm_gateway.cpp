// SPDX-License-Identifier: Apache-2.0
#include "dsagent/llm_gateway.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <thread>

using namespace dsagent;
using nlohmann::json;

namespace {

/// Minimal chat-completions server on a free local port.
class StubServer {
public:
    StubServer()
    {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer()
    {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

int closed_port()
{
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1"); // released when s goes away
}

OpenAiBackendOptions options(std::string url, std::string key_env = "DSAGENT_TEST_KEY")
{
    return OpenAiBackendOptions{std::move(url), "test-model", std::move(key_env), std::chrono::milliseconds(3000)};
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

ChatRequest request(AgentRole role)
{
    ChatRequest r;
    r.role = role;
    r.system_prompt = "sys";
    r.rendered_context = "# Project summary\n";
    r.instruction = "Choose the next action.";
    r.temperature = 0.2;
    return r;
}

} // namespace

TEST_CASE("scripted backend replays in order and records requests")
{
    CHECK(code_of([] { ScriptedBackend b({}); }) == ErrorCode::EmptyScript);
    ScriptedBackend b({std::string("first"), ToolCall{"finish", "{}"}}, "m");
    CHECK(b.complete(request(AgentRole::TextAgent)).raw_text == "first");
    const auto second = b.complete(request(AgentRole::Orchestrator));
    REQUIRE(second.native_tool_call.has_value());
    CHECK(second.native_tool_call->name == "finish");
    CHECK(second.model_id == "m");
    CHECK(b.remaining() == 0);
    CHECK(code_of([&] { b.complete(request(AgentRole::TextAgent)); }) == ErrorCode::BackendError);
    CHECK(b.requests().size() == 3);
    CHECK(b.diagnose().ok());
}

TEST_CASE("script parsing")
{
    const auto replies = parse_script(json::parse(
        R"(["hello", {"tool_call": {"name": "request_code", "arguments": {"purpose": "p"}}},
            {"tool_call": {"name": "finish", "arguments": "{}"}}])"));
    REQUIRE(replies.size() == 3);
    CHECK(std::get<std::string>(replies[0]) == "hello");
    CHECK(std::get<ToolCall>(replies[1]).arguments_json == R"({"purpose":"p"})");
    CHECK(std::get<ToolCall>(replies[2]).arguments_json == "{}");
    CHECK(code_of([] { parse_script(json::object()); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { parse_script(json::array({1})); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("gateway routes by role")
{
    LlmGateway gw;
    const auto a = gw.script_backend({std::string("from a")});
    const auto b = gw.script_backend({std::string("from b")});
    CHECK(a != b);
    CHECK(code_of([&] { gw.complete(request(AgentRole::CodeAgent)); }) == ErrorCode::UnknownBackend);
    CHECK(code_of([&] { gw.bind(AgentRole::CodeAgent, "nope"); }) == ErrorCode::UnknownBackend);
    gw.bind(AgentRole::CodeAgent, b);
    gw.bind(AgentRole::TextAgent, a);
    CHECK(gw.complete(request(AgentRole::CodeAgent)).raw_text == "from b");
    CHECK(gw.complete(request(AgentRole::TextAgent)).raw_text == "from a");
    CHECK(gw.bound(AgentRole::Orchestrator) == std::nullopt);
    CHECK(gw.diagnose("missing").detail == "unknown backend");
    CHECK(gw.diagnose(a).backend_id == a);
    CHECK(gw.backend_ids().size() == 2);
}

TEST_CASE("request body")
{
    OpenAiBackend backend(options("https://api.example.com/v1/"));
    auto req = request(AgentRole::Orchestrator);
    req.structured_schema = json::array({{{"type", "function"}}});
    auto body = backend.build_body(req);
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.2);
    CHECK(body["messages"][0] == json{{"role", "system"}, {"content", "sys"}});
    CHECK(body["messages"][1]["content"] == "# Project summary\n\n\nChoose the next action.");
    CHECK(body["tool_choice"] == "required");
    req.model = "override";
    req.structured_schema.reset();
    body = backend.build_body(req);
    CHECK(body["model"] == "override");
    CHECK_FALSE(body.contains("tools"));
    CHECK(code_of([] { OpenAiBackend bad(options("ftp://x")); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("response body")
{
    const auto tool = OpenAiBackend::parse_body(json::parse(R"({"model":"m","choices":[{"message":{"content":null,
        "tool_calls":[{"function":{"name":"request_text","arguments":"{\"spec\":\"s\"}"}}]}}]})"));
    CHECK(tool.model_id == "m");
    CHECK(tool.native_tool_call == ToolCall{"request_text", R"({"spec":"s"})"});
    const auto text = OpenAiBackend::parse_body(json::parse(R"({"choices":[{"message":{"content":"hi"}}]})"));
    CHECK(text.raw_text == "hi");
    CHECK(code_of([] { OpenAiBackend::parse_body(json::parse(R"({"choices":[]})")); }) == ErrorCode::BackendError);
    CHECK(code_of([] { OpenAiBackend::parse_body(json::parse(R"({"choices":[{"message":{}}]})")); }) ==
          ErrorCode::BackendError);
}

TEST_CASE("completion over HTTP")
{
    setenv("DSAGENT_TEST_KEY", "sekret", 1);
    StubServer stub;
    std::string seen_auth;
    json seen_body;
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"content":"```python\nprint(1)\n```"}}]})", "application/json");
    });
    stub.server().Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"data":[]})", "application/json");
    });
    OpenAiBackend backend(options(stub.url()));
    const auto r = backend.complete(request(AgentRole::CodeAgent));
    CHECK(r.raw_text == "```python\nprint(1)\n```");
    CHECK(r.model_id == "test-model");
    CHECK(seen_auth == "Bearer sekret");
    CHECK(seen_body["messages"].size() == 2);

    const auto report = backend.diagnose();
    CHECK(report.reachable);
    CHECK(report.auth == true);
    CHECK(report.ok());
}

TEST_CASE("rejected credentials")
{
    setenv("DSAGENT_TEST_KEY", "wrong", 1);
    StubServer stub;
    auto deny = [](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content(R"({"error":"invalid key"})", "application/json");
    };
    stub.server().Post("/v1/chat/completions", deny);
    stub.server().Get("/v1/models", deny);
    OpenAiBackend backend(options(stub.url()));
    CHECK(code_of([&] { backend.complete(request(AgentRole::TextAgent)); }) == ErrorCode::AuthError);
    const auto report = backend.diagnose();
    CHECK(report.reachable);
    CHECK(report.auth == false);
    CHECK_FALSE(report.ok());
    CHECK(report.detail.find("401") != std::string::npos);
}

TEST_CASE("server errors and missing keys")
{
    StubServer stub;
    stub.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("overloaded", "text/plain");
    });
    setenv("DSAGENT_TEST_KEY", "k", 1);
    OpenAiBackend backend(options(stub.url()));
    CHECK(code_of([&] { backend.complete(request(AgentRole::TextAgent)); }) == ErrorCode::BackendError);

    OpenAiBackend keyless(options(stub.url(), "DSAGENT_TEST_UNSET_KEY"));
    unsetenv("DSAGENT_TEST_UNSET_KEY");
    CHECK(code_of([&] { keyless.complete(request(AgentRole::TextAgent)); }) == ErrorCode::AuthError);
    const auto report = keyless.diagnose();
    CHECK(report.auth == false);
    CHECK(report.detail.find("DSAGENT_TEST_UNSET_KEY") != std::string::npos);
}

TEST_CASE("unreachable server")
{
    setenv("DSAGENT_TEST_KEY", "k", 1);
    OpenAiBackend backend(options("http://127.0.0.1:" + std::to_string(closed_port()) + "/v1"));
    CHECK(code_of([&] { backend.complete(request(AgentRole::TextAgent)); }) == ErrorCode::TransportError);
    const auto report = backend.diagnose();
    CHECK_FALSE(report.reachable);
    CHECK_FALSE(report.ok());
    CHECK(report.detail.find("unreachable") != std::string::npos);
}

TEST_CASE("local servers may need no key")
{
    StubServer stub;
    stub.server().Get("/v1/models", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content(req.has_header("Authorization") ? "auth" : "none", "text/plain");
    });
    OpenAiBackend backend(options(stub.url(), ""));
    const auto report = backend.diagnose();
    CHECK(report.ok());
}
