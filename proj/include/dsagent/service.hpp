// SPDX-License-Identifier: Apache-2.0
//
// HTTP+JSON service over the engine; the web console's only backend.
// Endpoints are listed in docs/http-api.md. Every mutating call on a
// session (step, autorun, import, reset) is serialized: while one runs, step,
// autorun and import answer 409 and reset waits for the current step to end.
#pragma once

#include "dsagent/assets_io.hpp"
#include "dsagent/clock.hpp"
#include "dsagent/llm_gateway.hpp"
#include "dsagent/sandbox.hpp"
#include "dsagent/service_config.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <string>

namespace dsagent {

/// Seams for tests and embedders. Unset members use the defaults built from
/// the ServiceConfig.
struct ServiceHooks {
    std::function<std::unique_ptr<CellExecutor>(const Session&, const AssetsDir&)> make_executor;
    std::function<std::unique_ptr<LlmGateway>()> make_gateway;
    std::function<std::string()> make_session_id;
    /// Clock for session timestamps; the service owns a SystemClock if null.
    Clock* clock = nullptr;
};

/// One server-sent event.
struct ServiceEvent {
    std::int64_t id = 0;
    std::string type;
    nlohmann::json data;
};

/// HTTP status for an engine error code.
int http_status(ErrorCode code) noexcept;

class Service {
public:
    explicit Service(ServiceConfig config, ServiceHooks hooks = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds without serving; port 0 picks a free port. Returns the port, or
    /// -1 on failure.
    int bind(const std::string& host, int port);
    /// Serves until stop(). Call after bind().
    bool listen_after_bind();
    /// Cancels autoruns, ends event streams and stops the server.
    void stop();
    void wait_until_ready() const;

    /// Events recorded for a session so far (tests, CLI tooling).
    [[nodiscard]] std::vector<ServiceEvent> events(const std::string& session_id) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace dsagent
