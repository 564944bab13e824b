// SPDX-License-Identifier: Apache-2.0
#include "dsagent/service.hpp"

#include "dsagent/codec.hpp"
#include "dsagent/error.hpp"
#include "dsagent/orchestrator.hpp"
#include "dsagent/prompts.hpp"
#include "dsagent/spec_file.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

namespace dsagent {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidConfig:
    case ErrorCode::SchemaViolation:
    case ErrorCode::VersionUnknown:
    case ErrorCode::DataPathMissing: return 400;
    case ErrorCode::SessionClosed:
    case ErrorCode::InvalidState:
    case ErrorCode::LimitReached: return 409;
    case ErrorCode::ActionParseFailure:
    case ErrorCode::UnknownAction:
    case ErrorCode::MissingField:
    case ErrorCode::UnexpectedField:
    case ErrorCode::InvalidFieldType:
    case ErrorCode::NoJsonFound: return 422;
    case ErrorCode::AuthError:
    case ErrorCode::TransportError:
    case ErrorCode::BackendError:
    case ErrorCode::EmptyScript:
    case ErrorCode::UnknownBackend: return 502;
    case ErrorCode::ImageMissing:
    case ErrorCode::RuntimeUnavailable:
    case ErrorCode::SandboxDead: return 503;
    case ErrorCode::IoError: return 500;
    }
    return 500;
}

namespace {

constexpr auto kStreamPoll = std::chrono::milliseconds(500);
constexpr const char* kJson = "application/json";

class EventLog {
public:
    std::int64_t append(std::string type, json data)
    {
        std::lock_guard lock(mutex_);
        const auto id = static_cast<std::int64_t>(events_.size()) + 1;
        events_.push_back({id, std::move(type), std::move(data)});
        cv_.notify_all();
        return id;
    }

    /// Events with id > `after`, waiting up to `wait` when there are none.
    std::vector<ServiceEvent> after(std::int64_t after, std::chrono::milliseconds wait, bool& closed)
    {
        std::unique_lock lock(mutex_);
        const auto have = [&] { return closed_ || static_cast<std::int64_t>(events_.size()) > after; };
        if (wait.count() > 0) {
            cv_.wait_for(lock, wait, have);
        }
        closed = closed_;
        const auto start = static_cast<std::size_t>(std::clamp<std::int64_t>(after, 0, events_.size()));
        return {events_.begin() + static_cast<std::ptrdiff_t>(start), events_.end()};
    }

    void close()
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
        cv_.notify_all();
    }

    [[nodiscard]] std::int64_t last_id() const
    {
        std::lock_guard lock(mutex_);
        return static_cast<std::int64_t>(events_.size());
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<ServiceEvent> events_;
    bool closed_ = false;
};

std::string sse_frame(const ServiceEvent& e)
{
    return "id: " + std::to_string(e.id) + "\nevent: " + e.type + "\ndata: " +
           e.data.dump(-1, ' ', false, json::error_handler_t::replace) + "\n\n";
}

struct SessionHost {
    explicit SessionHost(AssetsDir dir) : assets(std::move(dir)) {}

    std::string id;
    AssetsDir assets;
    std::unique_ptr<LlmGateway> gateway;
    std::unique_ptr<CellExecutor> executor;
    std::unique_ptr<Orchestrator> orchestrator;
    // Only the holder of the run guard touches `session`; everybody else
    // reads `snapshot`, refreshed on every event.
    std::optional<Session> session;
    mutable std::mutex snapshot_mutex;
    json snapshot;
    EventLog events;
    SystemClock log_clock;

    std::mutex guard_mutex;
    std::condition_variable guard_cv;
    bool busy = false;
    std::atomic<bool> autorun_active{false};

    std::mutex worker_mutex;
    std::jthread worker; // last member: joined before the rest is destroyed

    bool try_acquire()
    {
        std::lock_guard lock(guard_mutex);
        if (busy) {
            return false;
        }
        busy = true;
        return true;
    }
    void acquire()
    {
        std::unique_lock lock(guard_mutex);
        guard_cv.wait(lock, [&] { return !busy; });
        busy = true;
    }
    void release()
    {
        {
            std::lock_guard lock(guard_mutex);
            busy = false;
        }
        guard_cv.notify_all();
    }

    void refresh_snapshot()
    {
        auto j = run_to_json(*session);
        std::lock_guard lock(snapshot_mutex);
        snapshot = std::move(j);
    }

    json read_snapshot() const
    {
        std::lock_guard lock(snapshot_mutex);
        return snapshot;
    }

    void publish(const std::string& type, json data)
    {
        refresh_snapshot();
        try {
            assets.log_debug(log_clock, type + " " + data.dump(-1, ' ', false, json::error_handler_t::replace));
        } catch (const Error&) {
            // The debug log is best effort; the event still goes out.
        }
        events.append(type, std::move(data));
    }
};

struct Released {
    SessionHost& host;
    ~Released() { host.release(); }
};

json error_json(const std::string& code, const std::string& message, const std::string& path = {})
{
    json e = {{"code", code}, {"message", message}};
    if (!path.empty()) {
        e["path"] = path;
    }
    return {{"error", e}};
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), kJson);
}

void send_error(httplib::Response& res, const Error& e, const SessionHost* host = nullptr)
{
    std::string path;
    if (const auto* se = dynamic_cast<const SchemaError*>(&e)) {
        path = se->path().empty() ? "/" : se->path();
    }
    auto body = error_json(std::string(to_string(e.code())), e.detail(), path);
    if (host != nullptr && host->session) {
        body["status"] = to_string(host->session->status());
    }
    send_json(res, http_status(e.code()), body);
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("request body is not valid JSON: ") + e.what());
    }
}

ProjectSpec spec_from_request(const json& spec)
{
    if (spec.is_object() && spec.contains("task_specific_instructions")) {
        return parse_spec_file(spec.dump());
    }
    auto parsed = codec::spec_from_json(spec, "/spec");
    validate(parsed);
    return parsed;
}

std::string content_type_for(const fs::path& path)
{
    const auto ext = path.extension().string();
    static const std::map<std::string, std::string> types = {
        {".png", "image/png"},         {".jpg", "image/jpeg"},     {".jpeg", "image/jpeg"},
        {".gif", "image/gif"},         {".svg", "image/svg+xml"},  {".webp", "image/webp"},
        {".json", kJson},              {".ndjson", "application/x-ndjson"},
        {".md", "text/markdown; charset=utf-8"},                   {".ipynb", "application/x-ipynb+json"},
        {".csv", "text/csv; charset=utf-8"},                       {".html", "text/html; charset=utf-8"},
        {".log", "text/plain; charset=utf-8"},                     {".txt", "text/plain; charset=utf-8"},
    };
    const auto it = types.find(ext);
    return it == types.end() ? "application/octet-stream" : it->second;
}

json outcome_json(const StepOutcome& outcome, const Session& session)
{
    json j = {{"action", to_json(outcome.action_taken)},
              {"halted", outcome.halted},
              {"status", to_string(session.status())},
              {"step_count", session.step_count()}};
    if (outcome.cell_id) {
        j["cell"] = codec::to_json(session.cell(*outcome.cell_id));
    }
    return j;
}

} // namespace

struct Service::Impl {
    ServiceConfig config;
    ServiceHooks hooks;
    PromptSet prompts;
    SystemClock system_clock;
    Clock* clock = nullptr;
    httplib::Server server;

    mutable std::mutex hosts_mutex;
    std::map<std::string, std::shared_ptr<SessionHost>> hosts;
    std::atomic<bool> stopping{false};

    std::shared_ptr<SessionHost> find(const std::string& id) const
    {
        std::lock_guard lock(hosts_mutex);
        const auto it = hosts.find(id);
        return it == hosts.end() ? nullptr : it->second;
    }

    std::unique_ptr<LlmGateway> new_gateway() const
    {
        return hooks.make_gateway ? hooks.make_gateway() : build_gateway(config);
    }

    std::unique_ptr<CellExecutor> new_executor(const Session& session, const AssetsDir& assets)
    {
        if (hooks.make_executor) {
            return hooks.make_executor(session, assets);
        }
        return Sandbox::open(session.id(), session.spec().data_location, session.config(), config.sandbox,
                             assets.root(), *clock);
    }

    /// Fresh gateway and orchestrator; scripted backends restart.
    void rewire(SessionHost& host)
    {
        host.gateway = new_gateway();
        host.orchestrator = std::make_unique<Orchestrator>(*host.gateway, *host.executor, prompts, *clock);
        host.orchestrator->set_observer([&host](const EngineEvent& e) { host.publish(e.type, e.data); });
    }

    std::shared_ptr<SessionHost> open_host(Session session)
    {
        const auto id = session.id();
        auto host = std::make_shared<SessionHost>(AssetsDir::create(config.assets_root / id));
        host->id = id;
        host->session.emplace(std::move(session));
        host->assets.write_asset(AssetKind::Spec, codec::to_json(host->session->spec()).dump(2) + "\n");
        host->executor = new_executor(*host->session, host->assets);
        rewire(*host);
        return host;
    }

    std::string next_id() const { return hooks.make_session_id ? hooks.make_session_id() : generate_session_id(); }

    void routes();
    void create_session(const httplib::Request& req, httplib::Response& res);
    void step(SessionHost& host, httplib::Response& res);
    void autorun(const std::shared_ptr<SessionHost>& host, httplib::Response& res);
    void reset(SessionHost& host, const httplib::Request& req, httplib::Response& res);
    void import_run(SessionHost& host, const httplib::Request& req, httplib::Response& res);
    void export_run(const SessionHost& host, const httplib::Request& req, httplib::Response& res);
    void stream_events(const std::shared_ptr<SessionHost>& host, const httplib::Request& req,
                       httplib::Response& res);
    void serve_asset(const SessionHost& host, const std::string& path, httplib::Response& res);
};

void Service::Impl::create_session(const httplib::Request& req, httplib::Response& res)
{
    const auto body = parse_body(req);
    if (!body.is_object()) {
        throw SchemaError("", "expected an object with spec and config");
    }
    std::optional<Session> session;
    if (body.contains("run")) {
        auto loaded = run_from_json(body["run"]);
        auto state = loaded.state();
        state.session_id = next_id();
        session.emplace(Session::restore(std::move(state)));
        note_resume(*session, clock->now_ms(), false);
    } else {
        if (!body.contains("spec")) {
            throw SchemaError("/spec", "required field is missing");
        }
        auto run = effective_run_config(config);
        if (body.contains("config")) {
            codec::apply_config_overrides(run, body["config"], "/config");
        }
        session.emplace(new_session(spec_from_request(body["spec"]), run, next_id()));
    }
    auto host = open_host(std::move(*session));
    {
        std::lock_guard lock(hosts_mutex);
        hosts[host->id] = host;
    }
    host->publish("session_created", {{"session_id", host->id}});
    send_json(res, 201, {{"session_id", host->id}, {"status", to_string(host->session->status())}});
}

void Service::Impl::step(SessionHost& host, httplib::Response& res)
{
    if (!host.try_acquire()) {
        send_json(res, 409, error_json("Busy", "another step, autorun or import is in progress"));
        return;
    }
    Released guard{host};
    try {
        const auto outcome = host.orchestrator->step(*host.session);
        host.refresh_snapshot();
        send_json(res, 200, outcome_json(outcome, *host.session));
    } catch (const Error& e) {
        host.publish("error", {{"code", to_string(e.code())}, {"message", e.detail()}});
        send_error(res, e, &host);
    }
}

void Service::Impl::autorun(const std::shared_ptr<SessionHost>& host, httplib::Response& res)
{
    if (!host->try_acquire()) {
        send_json(res, 409, error_json("Busy", "another step, autorun or import is in progress"));
        return;
    }
    const auto status = host->session->status();
    if (status == SessionStatus::Finished || status == SessionStatus::Failed ||
        status == SessionStatus::StoppedMaxSteps) {
        host->release();
        send_json(res, 409, error_json("SessionClosed", "session is " + std::string(to_string(status))));
        return;
    }
    host->autorun_active = true;
    host->publish("autorun_started", {{"step_count", host->session->step_count()}});
    std::lock_guard lock(host->worker_mutex);
    if (host->worker.joinable()) {
        host->worker.join();
    }
    // The worker owns the run guard until it finishes.
    host->worker = std::jthread([h = host.get()](std::stop_token stop) {
        try {
            h->orchestrator->autorun(*h->session, stop);
        } catch (const Error& e) {
            h->publish("error", {{"code", to_string(e.code())}, {"message", e.detail()}});
        } catch (const std::exception& e) {
            h->publish("error", {{"code", "Internal"}, {"message", e.what()}});
        }
        h->publish("autorun_finished", {{"status", to_string(h->session->status())},
                                        {"step_count", h->session->step_count()},
                                        {"cancelled", stop.stop_requested()}});
        h->autorun_active = false;
        h->release();
    });
    send_json(res, 202, {{"status", "running"}, {"session_id", host->id}});
}

void Service::Impl::reset(SessionHost& host, const httplib::Request& req, httplib::Response& res)
{
    const auto body = parse_body(req);
    {
        std::lock_guard lock(host.worker_mutex);
        host.worker.request_stop();
    }
    host.acquire(); // waits for the current step boundary
    Released guard{host};
    {
        std::lock_guard lock(host.worker_mutex);
        if (host.worker.joinable()) {
            host.worker.join();
        }
    }
    auto& session = *host.session;
    const auto before = session.config();
    session.reset();
    if (body.is_object() && body.contains("config")) {
        auto cfg = before;
        codec::apply_config_overrides(cfg, body["config"], "/config");
        session.update_config(cfg);
    }
    if (session.config().network_enabled != before.network_enabled) {
        host.orchestrator.reset();
        host.executor.reset();
        host.executor = new_executor(session, host.assets);
    } else {
        host.executor->reset();
    }
    rewire(host);
    host.publish("reset", {{"status", to_string(session.status())}, {"config", codec::to_json(session.config())}});
    send_json(res, 200, {{"status", to_string(session.status())}});
}

void Service::Impl::import_run(SessionHost& host, const httplib::Request& req, httplib::Response& res)
{
    if (!host.try_acquire()) {
        send_json(res, 409, error_json("Busy", "another step, autorun or import is in progress"));
        return;
    }
    Released guard{host};
    const bool replay = req.get_param_value("replay") == "true" || req.get_param_value("replay") == "1";
    auto loaded = load_run(req.body);
    auto state = loaded.state();
    const auto source_id = state.session_id;
    state.session_id = host.id;
    host.session.emplace(Session::restore(std::move(state)));
    note_resume(*host.session, clock->now_ms(), replay);
    host.executor->reset();
    rewire(host);
    if (replay) {
        host.orchestrator->replay(*host.session);
    }
    host.publish("imported", {{"notice", kResumeNotice}, {"replay", replay}, {"source_session_id", source_id}});
    send_json(res, 200, {{"status", to_string(host.session->status())}, {"cells", host.session->cells().size()}});
}

void Service::Impl::export_run(const SessionHost& host, const httplib::Request& req, httplib::Response& res)
{
    const auto format = req.has_param("format") ? req.get_param_value("format") : std::string("json");
    const auto snapshot = host.read_snapshot();
    std::string body;
    std::string type;
    std::string ext;
    if (format == "json") {
        body = snapshot.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
        type = kJson;
        ext = "json";
    } else if (format == "md") {
        body = export_markdown(run_from_json(snapshot), "assets/");
        type = "text/markdown; charset=utf-8";
        ext = "md";
    } else if (format == "ipynb") {
        body = export_notebook(run_from_json(snapshot));
        type = "application/x-ipynb+json";
        ext = "ipynb";
    } else {
        send_json(res, 400, error_json("BadRequest", "format must be json, md or ipynb"));
        return;
    }
    res.set_header("Content-Disposition", "attachment; filename=\"" + host.id + "." + ext + "\"");
    res.status = 200;
    res.set_content(body, type);
}

void Service::Impl::stream_events(const std::shared_ptr<SessionHost>& host, const httplib::Request& req,
                                  httplib::Response& res)
{
    std::int64_t after = 0;
    const auto parse_id = [](const std::string& s) -> std::int64_t {
        try {
            return std::max<std::int64_t>(0, std::stoll(s));
        } catch (const std::logic_error&) {
            return 0;
        }
    };
    if (req.has_header("Last-Event-ID")) {
        after = parse_id(req.get_header_value("Last-Event-ID"));
    } else if (req.has_param("after")) {
        after = parse_id(req.get_param_value("after"));
    }
    res.set_header("Cache-Control", "no-cache");
    const auto follow = req.get_param_value("follow");
    if (follow == "0" || follow == "false") {
        bool closed = false;
        std::string body;
        for (const auto& e : host->events.after(after, std::chrono::milliseconds(0), closed)) {
            body += sse_frame(e);
        }
        res.set_content(body, "text/event-stream");
        return;
    }
    auto cursor = std::make_shared<std::int64_t>(after);
    res.set_chunked_content_provider("text/event-stream", [this, host, cursor](std::size_t, httplib::DataSink& sink) {
        bool closed = false;
        const auto batch = host->events.after(*cursor, kStreamPoll, closed);
        if (batch.empty()) {
            if (closed || stopping) {
                sink.done();
                return true;
            }
            const std::string keepalive = ": keepalive\n\n";
            return sink.write(keepalive.data(), keepalive.size());
        }
        for (const auto& e : batch) {
            const auto frame = sse_frame(e);
            if (!sink.write(frame.data(), frame.size())) {
                return false;
            }
            *cursor = e.id;
        }
        return true;
    });
}

void Service::Impl::serve_asset(const SessionHost& host, const std::string& path, httplib::Response& res)
{
    const auto resolved = host.assets.resolve(path);
    std::error_code ec;
    if (!resolved || !fs::is_regular_file(*resolved, ec)) {
        send_json(res, 404, error_json("NotFound", "no asset '" + path + "'"));
        return;
    }
    std::ifstream in(*resolved, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    res.status = 200;
    res.set_content(ss.str(), content_type_for(*resolved));
}

void Service::Impl::routes()
{
    const std::string sid = "/sessions/([A-Za-z0-9_-]+)";

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
        res.status = 204;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const std::exception& e) {
            send_json(res, 500, error_json("Internal", e.what()));
        } catch (...) {
            send_json(res, 500, error_json("Internal", "unknown error"));
        }
    });

    // Wraps a per-session handler with the 404 lookup.
    const auto with_host = [this](auto handler) {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            auto host = find(req.matches[1]);
            if (!host) {
                send_json(res, 404, error_json("NotFound", "no session '" + std::string(req.matches[1]) + "'"));
                return;
            }
            handler(host, req, res);
        };
    };

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create_session(req, res); });
    server.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        std::lock_guard lock(hosts_mutex);
        for (const auto& [id, host] : hosts) {
            const auto snap = host->read_snapshot();
            list.push_back({{"session_id", id}, {"status", snap.value("status", "")}});
        }
        send_json(res, 200, {{"sessions", list}});
    });
    server.Get(sid, with_host([](const auto& host, const auto&, auto& res) {
        send_json(res, 200,
                  {{"session", host->read_snapshot()},
                   {"last_event_id", host->events.last_id()},
                   {"autorun_active", host->autorun_active.load()}});
    }));
    server.Post(sid + "/step", with_host([this](const auto& host, const auto&, auto& res) { step(*host, res); }));
    server.Post(sid + "/autorun", with_host([this](const auto& host, const auto&, auto& res) { autorun(host, res); }));
    server.Post(sid + "/reset",
                with_host([this](const auto& host, const auto& req, auto& res) { reset(*host, req, res); }));
    server.Post(sid + "/import",
                with_host([this](const auto& host, const auto& req, auto& res) { import_run(*host, req, res); }));
    server.Get(sid + "/export",
               with_host([this](const auto& host, const auto& req, auto& res) { export_run(*host, req, res); }));
    server.Get(sid + "/events",
               with_host([this](const auto& host, const auto& req, auto& res) { stream_events(host, req, res); }));
    server.Get(sid + "/assets", with_host([](const auto& host, const auto&, auto& res) {
        json files = json::array();
        for (const auto& entry : host->assets.list()) {
            files.push_back({{"path", entry.path}, {"size", entry.size}});
        }
        send_json(res, 200, {{"files", files}});
    }));
    server.Get(sid + "/assets/(.+)", with_host([this](const auto& host, const auto& req, auto& res) {
        serve_asset(*host, req.matches[2], res);
    }));
    server.Get("/diagnostics", [this](const httplib::Request&, httplib::Response& res) {
        const auto report = hooks.make_gateway ? run_diagnostics(config, *hooks.make_gateway())
                                               : run_diagnostics(config);
        send_json(res, 200, report.to_json());
    });
}

Service::Service(ServiceConfig config, ServiceHooks hooks) : impl_(std::make_unique<Impl>())
{
    impl_->config = std::move(config);
    impl_->hooks = std::move(hooks);
    impl_->clock = impl_->hooks.clock != nullptr ? impl_->hooks.clock : &impl_->system_clock;
    impl_->prompts = PromptSet::load(default_prompts_dir());
    std::error_code ec;
    fs::create_directories(impl_->config.assets_root, ec);
    impl_->routes();
}

Service::~Service()
{
    stop();
}

int Service::bind(const std::string& host, int port)
{
    if (port == 0) {
        return impl_->server.bind_to_any_port(host);
    }
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::listen_after_bind()
{
    return impl_->server.listen_after_bind();
}

void Service::wait_until_ready() const
{
    impl_->server.wait_until_ready();
}

void Service::stop()
{
    if (impl_->stopping.exchange(true)) {
        return;
    }
    std::vector<std::shared_ptr<SessionHost>> hosts;
    {
        std::lock_guard lock(impl_->hosts_mutex);
        for (const auto& [id, host] : impl_->hosts) {
            hosts.push_back(host);
        }
    }
    for (const auto& host : hosts) {
        std::lock_guard lock(host->worker_mutex);
        host->worker.request_stop();
        host->events.close();
    }
    for (const auto& host : hosts) {
        std::lock_guard lock(host->worker_mutex);
        if (host->worker.joinable()) {
            host->worker.join();
        }
    }
    impl_->server.stop();
}

std::vector<ServiceEvent> Service::events(const std::string& session_id) const
{
    const auto host = impl_->find(session_id);
    if (!host) {
        return {};
    }
    bool closed = false;
    return host->events.after(0, std::chrono::milliseconds(0), closed);
}

} // namespace dsagent
