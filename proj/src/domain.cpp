// SPDX-License-Identifier: Apache-2.0
#include "dsagent/domain.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <sstream>

namespace dsagent {

namespace {

bool has_control_chars(std::string_view s)
{
    return std::any_of(s.begin(), s.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u < 0x20 || u == 0x7f;
    });
}

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table)
{
    for (const auto& [value, name] : table) {
        if (name == s) {
            return value;
        }
    }
    return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum e, const std::array<std::pair<Enum, std::string_view>, N>& table)
{
    for (const auto& [value, name] : table) {
        if (value == e) {
            return name;
        }
    }
    return "unknown";
}

constexpr std::array<std::pair<CellKind, std::string_view>, 3> kCellKinds{{
    {CellKind::Text, "text"},
    {CellKind::Code, "code"},
    {CellKind::Finish, "finish"},
}};

constexpr std::array<std::pair<ExecStatus, std::string_view>, 3> kExecStatuses{{
    {ExecStatus::Success, "success"},
    {ExecStatus::Error, "error"},
    {ExecStatus::Timeout, "timeout"},
}};

constexpr std::array<std::pair<SessionStatus, std::string_view>, 6> kSessionStatuses{{
    {SessionStatus::Idle, "idle"},
    {SessionStatus::Running, "running"},
    {SessionStatus::AwaitingNextStep, "awaiting_next_step"},
    {SessionStatus::Finished, "finished"},
    {SessionStatus::StoppedMaxSteps, "stopped_max_steps"},
    {SessionStatus::Failed, "failed"},
}};

constexpr std::array<std::pair<AgentRole, std::string_view>, 3> kRoles{{
    {AgentRole::Orchestrator, "orchestrator"},
    {AgentRole::TextAgent, "text"},
    {AgentRole::CodeAgent, "code"},
}};

constexpr std::array<std::pair<ToolMode, std::string_view>, 2> kToolModes{{
    {ToolMode::NativeToolCalls, "native"},
    {ToolMode::EmulatedJson, "emulated"},
}};

} // namespace

// ---------------------------------------------------------------------------

bool is_valid_location(std::string_view location)
{
    if (location.empty() || has_control_chars(location)) {
        return false;
    }
    if (std::isspace(static_cast<unsigned char>(location.front())) ||
        std::isspace(static_cast<unsigned char>(location.back()))) {
        return false;
    }
    const auto scheme_end = location.find("://");
    if (scheme_end == std::string_view::npos) {
        return true;
    }
    // scheme = ALPHA *( ALPHA / DIGIT / "+" / "-" / "." )
    const auto scheme = location.substr(0, scheme_end);
    if (scheme.empty() || !std::isalpha(static_cast<unsigned char>(scheme.front()))) {
        return false;
    }
    for (char c : scheme) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') {
            return false;
        }
    }
    return location.size() > scheme_end + 3;
}

void validate(const ProjectSpec& spec)
{
    auto blank = [](const std::string& s) {
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    };
    if (blank(spec.task_description)) {
        throw Error(ErrorCode::InvalidSpec, "task_description must not be empty");
    }
    if (!spec.data_location.empty() && !is_valid_location(spec.data_location)) {
        throw Error(ErrorCode::InvalidSpec, "data_location is not a valid path or URI: '" + spec.data_location + "'");
    }
    for (const auto& [key, value] : spec.general_instructions) {
        if (key.empty()) {
            throw Error(ErrorCode::InvalidSpec, "general_instructions contains an empty key");
        }
    }
}

const AgentSettings& RunConfig::agent(AgentRole role) const noexcept
{
    switch (role) {
    case AgentRole::Orchestrator: return orchestrator;
    case AgentRole::TextAgent: return text_agent;
    case AgentRole::CodeAgent: break;
    }
    return code_agent;
}

AgentSettings& RunConfig::agent(AgentRole role) noexcept
{
    return const_cast<AgentSettings&>(std::as_const(*this).agent(role));
}

void validate(const RunConfig& config)
{
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (config.max_steps < 1) {
        fail("max_steps must be a positive integer");
    }
    if (config.max_code_retries < 0) {
        fail("max_code_retries must be non-negative");
    }
    if (config.history_char_limit < 1) {
        fail("history_char_limit must be a positive integer");
    }
    if (config.head_tail_lines < 1) {
        fail("head_tail_lines must be a positive integer");
    }
    if (config.cell_timeout_ms < 1) {
        fail("cell_timeout_ms must be a positive integer");
    }
    for (auto role : kAllRoles) {
        const double t = config.agent(role).temperature;
        if (!(t >= 0.0 && t <= 2.0)) {
            fail(std::string(to_string(role)) + " temperature must be within [0, 2]");
        }
    }
}

std::string_view action_name(const OrchestratorAction& action)
{
    struct Visitor {
        std::string_view operator()(const RequestText&) const { return "request_text"; }
        std::string_view operator()(const RequestCode&) const { return "request_code"; }
        std::string_view operator()(const Finish&) const { return "finish"; }
    };
    return std::visit(Visitor{}, action);
}

nlohmann::json to_json(const OrchestratorAction& action)
{
    nlohmann::json j;
    j["action"] = action_name(action);
    if (const auto* t = std::get_if<RequestText>(&action)) {
        j["spec"] = t->spec;
    } else if (const auto* c = std::get_if<RequestCode>(&action)) {
        j["purpose"] = c->purpose;
    } else if (const auto& f = std::get<Finish>(action); f.summary_hint) {
        j["summary_hint"] = *f.summary_hint;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session new_session(ProjectSpec spec, RunConfig config, std::string session_id)
{
    validate(spec);
    validate(config);
    if (session_id.empty()) {
        session_id = generate_session_id();
    }
    Session::State state;
    state.session_id = std::move(session_id);
    state.spec = std::move(spec);
    state.config = std::move(config);
    return Session(std::move(state));
}

Session new_session(ProjectSpec spec, RunConfig config)
{
    return new_session(std::move(spec), std::move(config), generate_session_id());
}

std::string generate_session_id()
{
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << rng();
    return os.str();
}

Session Session::restore(State state)
{
    auto fail = [](const std::string& path, const std::string& msg) { throw SchemaError(path, msg); };

    if (state.session_id.empty()) {
        fail("/session_id", "must not be empty");
    }
    try {
        validate(state.spec);
    } catch (const Error& e) {
        fail("/spec", e.detail());
    }
    try {
        validate(state.config);
    } catch (const Error& e) {
        fail("/config", e.detail());
    }

    std::int64_t last_id = 0;
    std::array<int, 3> per_kind{};
    for (std::size_t i = 0; i < state.cells.size(); ++i) {
        const auto& c = state.cells[i];
        const std::string at = "/cells/" + std::to_string(i);
        if (c.id <= last_id) {
            fail(at + "/id", "cell ids must be strictly increasing");
        }
        last_id = c.id;
        const int expected_ordinal = ++per_kind[static_cast<std::size_t>(c.kind)];
        if (c.ordinal != expected_ordinal) {
            fail(at + "/ordinal", "expected " + std::to_string(expected_ordinal));
        }
        if (c.kind == CellKind::Finish && i + 1 != state.cells.size()) {
            fail(at + "/kind", "a finish cell must be the last cell");
        }
        if (c.kind != CellKind::Code && !c.results.empty()) {
            fail(at + "/results", "only code cells carry execution results");
        }
        for (std::size_t r = 0; r < c.results.size(); ++r) {
            const auto& res = c.results[r];
            const std::string rat = at + "/results/" + std::to_string(r);
            if (res.attempt != static_cast<int>(r) + 1) {
                fail(rat + "/attempt", "attempts must be consecutive starting at 1");
            }
            if (res.status == ExecStatus::Error && res.stderr_text.empty()) {
                fail(rat + "/stderr", "an error result must carry stderr");
            }
            if (res.duration_ms < 0) {
                fail(rat + "/duration_ms", "must be non-negative");
            }
        }
    }

    const bool ends_with_finish = !state.cells.empty() && state.cells.back().kind == CellKind::Finish;
    if (ends_with_finish != (state.status == SessionStatus::Finished)) {
        fail("/status", "status is finished iff the last cell is a finish cell");
    }
    if (state.step_count < 0 || state.step_count > state.config.max_steps) {
        fail("/step_count", "must be within [0, config.max_steps]");
    }
    return Session(std::move(state));
}

const Cell& Session::cell(std::int64_t id) const
{
    auto it = std::find_if(state_.cells.begin(), state_.cells.end(), [id](const Cell& c) { return c.id == id; });
    if (it == state_.cells.end()) {
        throw Error(ErrorCode::InvalidState, "no cell with id " + std::to_string(id));
    }
    return *it;
}

Cell& Session::mutable_cell(std::int64_t id)
{
    return const_cast<Cell&>(std::as_const(*this).cell(id));
}

bool Session::open() const noexcept
{
    return state_.status != SessionStatus::Finished && state_.status != SessionStatus::Failed;
}

const Cell& Session::append_cell(CellKind kind, std::string source, std::string purpose_or_spec,
                                 std::int64_t created_at_ms)
{
    if (!open()) {
        throw Error(ErrorCode::SessionClosed,
                    "cannot append to a session with status " + std::string(to_string(state_.status)));
    }
    Cell c;
    c.id = state_.cells.empty() ? 1 : state_.cells.back().id + 1;
    c.kind = kind;
    c.ordinal = 1 + static_cast<int>(std::count_if(state_.cells.begin(), state_.cells.end(),
                                                    [kind](const Cell& x) { return x.kind == kind; }));
    c.source = std::move(source);
    c.purpose_or_spec = std::move(purpose_or_spec);
    c.created_at_ms = created_at_ms;
    state_.cells.push_back(std::move(c));
    if (kind == CellKind::Finish) {
        state_.status = SessionStatus::Finished;
    }
    return state_.cells.back();
}

const ExecutionResult& Session::record_result(std::int64_t cell_id, ExecutionResult result)
{
    auto& c = mutable_cell(cell_id);
    if (c.kind != CellKind::Code) {
        throw Error(ErrorCode::InvalidState, "execution results belong to code cells only");
    }
    result.attempt = static_cast<int>(c.results.size()) + 1;
    if (result.status != ExecStatus::Success && result.stderr_text.empty()) {
        result.stderr_text = std::string("cell ended with status ") + std::string(to_string(result.status)) +
                             " and no error output\n";
    }
    c.results.push_back(std::move(result));
    return c.results.back();
}

void Session::replace_source(std::int64_t cell_id, std::string source, std::int64_t now_ms)
{
    auto& c = mutable_cell(cell_id);
    if (c.kind != CellKind::Code) {
        throw Error(ErrorCode::InvalidState, "only code cells can be rewritten");
    }
    add_trace(now_ms, "source_replaced",
              {{"cell_id", cell_id}, {"attempt", c.results.size()}, {"previous_source", c.source}});
    c.source = std::move(source);
}

void Session::set_status(SessionStatus status)
{
    state_.status = status;
}

void Session::count_step()
{
    if (state_.step_count >= state_.config.max_steps) {
        throw Error(ErrorCode::LimitReached, "step budget of " + std::to_string(state_.config.max_steps) +
                                                 " orchestrator decisions is exhausted");
    }
    ++state_.step_count;
}

void Session::add_trace(std::int64_t time_ms, std::string event, nlohmann::json data)
{
    state_.trace.push_back(TraceRecord{time_ms, std::move(event), std::move(data)});
}

void Session::reset()
{
    state_.cells.clear();
    state_.trace.clear();
    state_.step_count = 0;
    state_.status = SessionStatus::Idle;
}

void Session::update_config(RunConfig config)
{
    if (state_.status == SessionStatus::Running) {
        throw Error(ErrorCode::InvalidState, "configuration cannot change while a step is running");
    }
    validate(config);
    if (config.max_steps < state_.step_count) {
        throw Error(ErrorCode::InvalidConfig, "max_steps is below the number of steps already taken");
    }
    state_.config = std::move(config);
    if (state_.status == SessionStatus::StoppedMaxSteps && state_.step_count < state_.config.max_steps) {
        state_.status = SessionStatus::AwaitingNextStep;
    }
}

bool Session::operator==(const Session& other) const
{
    const auto& a = state_;
    const auto& b = other.state_;
    return a.session_id == b.session_id && a.spec == b.spec && a.config == b.config && a.cells == b.cells &&
           a.status == b.status && a.step_count == b.step_count && a.trace == b.trace;
}

// ---------------------------------------------------------------------------

std::string_view to_string(CellKind kind) noexcept { return name_of(kind, kCellKinds); }
std::string_view to_string(ExecStatus status) noexcept { return name_of(status, kExecStatuses); }
std::string_view to_string(SessionStatus status) noexcept { return name_of(status, kSessionStatuses); }
std::string_view to_string(AgentRole role) noexcept { return name_of(role, kRoles); }
std::string_view to_string(ToolMode mode) noexcept { return name_of(mode, kToolModes); }

std::optional<CellKind> parse_cell_kind(std::string_view s) noexcept { return lookup(s, kCellKinds); }
std::optional<ExecStatus> parse_exec_status(std::string_view s) noexcept { return lookup(s, kExecStatuses); }
std::optional<SessionStatus> parse_session_status(std::string_view s) noexcept
{
    return lookup(s, kSessionStatuses);
}
std::optional<AgentRole> parse_agent_role(std::string_view s) noexcept { return lookup(s, kRoles); }
std::optional<ToolMode> parse_tool_mode(std::string_view s) noexcept { return lookup(s, kToolModes); }

} // namespace dsagent
