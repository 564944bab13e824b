// SPDX-License-Identifier: Apache-2.0
//
// Core data model: the structured project description, transcript cells,
// run configuration and the session state machine.
#pragma once

#include "dsagent/error.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace dsagent {

// ---------------------------------------------------------------------------
// Project description
// ---------------------------------------------------------------------------

struct ProjectSpec {
    /// Free-form key/value pairs in the order the user gave them
    /// (estimated step count, expected plots, plan verbosity, ...).
    std::vector<std::pair<std::string, std::string>> general_instructions;

    std::string task_description;
    std::string data_description;
    std::string data_location;
    std::string metrics;
    std::string inputs;
    std::string outputs;
    std::string special_instructions;

    bool operator==(const ProjectSpec&) const = default;
};

/// Throws Error{InvalidSpec} naming the offending field.
void validate(const ProjectSpec& spec);

/// True when `location` is a plausible filesystem path or URI.
bool is_valid_location(std::string_view location);

// ---------------------------------------------------------------------------
// Execution results and cells
// ---------------------------------------------------------------------------

enum class ExecStatus { Success, Error, Timeout };

struct ExecutionResult {
    int attempt = 1;
    ExecStatus status = ExecStatus::Success;
    std::string stdout_text;
    std::string stderr_text;
    std::int64_t duration_ms = 0;
    /// Paths relative to the assets directory, sorted.
    std::vector<std::string> artifacts_written;

    bool operator==(const ExecutionResult&) const = default;
};

enum class CellKind { Text, Code, Finish };

struct Cell {
    std::int64_t id = 0;
    CellKind kind = CellKind::Text;
    int ordinal = 0;
    std::string source;
    std::string purpose_or_spec;
    std::vector<ExecutionResult> results;
    std::int64_t created_at_ms = 0;

    /// Last result, i.e. the authoritative one; nullptr before the first run.
    [[nodiscard]] const ExecutionResult* final_result() const noexcept
    {
        return results.empty() ? nullptr : &results.back();
    }
    /// Code cell whose authoritative run did not succeed.
    [[nodiscard]] bool failed() const noexcept
    {
        const auto* r = final_result();
        return kind == CellKind::Code && r != nullptr && r->status != ExecStatus::Success;
    }

    bool operator==(const Cell&) const = default;
};

// ---------------------------------------------------------------------------
// Orchestrator decisions
// ---------------------------------------------------------------------------

struct RequestText {
    std::string spec;
    bool operator==(const RequestText&) const = default;
};
struct RequestCode {
    std::string purpose;
    bool operator==(const RequestCode&) const = default;
};
struct Finish {
    std::optional<std::string> summary_hint;
    bool operator==(const Finish&) const = default;
};

using OrchestratorAction = std::variant<RequestText, RequestCode, Finish>;

/// "request_text" / "request_code" / "finish".
std::string_view action_name(const OrchestratorAction& action);
nlohmann::json to_json(const OrchestratorAction& action);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class AgentRole { Orchestrator, TextAgent, CodeAgent };
inline constexpr AgentRole kAllRoles[] = {AgentRole::Orchestrator, AgentRole::TextAgent,
                                          AgentRole::CodeAgent};

enum class ToolMode { NativeToolCalls, EmulatedJson };

struct AgentSettings {
    /// Empty means "whatever the bound backend is configured with".
    std::string model;
    double temperature = 0.0;
    bool operator==(const AgentSettings&) const = default;
};

struct RunConfig {
    int max_steps = 30;
    int max_code_retries = 3;
    int history_char_limit = 10000;
    int head_tail_lines = 20;
    AgentSettings orchestrator{"", 0.2};
    AgentSettings text_agent{"", 0.4};
    AgentSettings code_agent{"", 0.0};
    ToolMode tool_mode = ToolMode::NativeToolCalls;
    std::int64_t cell_timeout_ms = 120000;
    bool network_enabled = false;

    [[nodiscard]] const AgentSettings& agent(AgentRole role) const noexcept;
    AgentSettings& agent(AgentRole role) noexcept;

    bool operator==(const RunConfig&) const = default;
};

/// Throws Error{InvalidConfig} naming the offending field.
void validate(const RunConfig& config);

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

enum class SessionStatus { Idle, Running, AwaitingNextStep, Finished, StoppedMaxSteps, Failed };

struct TraceRecord {
    std::int64_t time_ms = 0;
    std::string event;
    nlohmann::json data = nlohmann::json::object();

    bool operator==(const TraceRecord&) const = default;
};

class Session {
public:
    /// Fields needed to rebuild a session from a run file.
    struct State {
        std::string session_id;
        ProjectSpec spec;
        RunConfig config;
        std::vector<Cell> cells;
        SessionStatus status = SessionStatus::Idle;
        int step_count = 0;
        std::vector<TraceRecord> trace;
    };

    /// Validates `state` against every session invariant. Violations throw
    /// SchemaError with a JSON pointer into the run-file layout.
    static Session restore(State state);

    [[nodiscard]] const std::string& id() const noexcept { return state_.session_id; }
    [[nodiscard]] const ProjectSpec& spec() const noexcept { return state_.spec; }
    [[nodiscard]] const RunConfig& config() const noexcept { return state_.config; }
    [[nodiscard]] const std::vector<Cell>& cells() const noexcept { return state_.cells; }
    [[nodiscard]] SessionStatus status() const noexcept { return state_.status; }
    [[nodiscard]] int step_count() const noexcept { return state_.step_count; }
    [[nodiscard]] const std::vector<TraceRecord>& trace() const noexcept { return state_.trace; }
    [[nodiscard]] const State& state() const noexcept { return state_; }

    [[nodiscard]] const Cell& cell(std::int64_t id) const;
    [[nodiscard]] const Cell* last_cell() const noexcept
    {
        return state_.cells.empty() ? nullptr : &state_.cells.back();
    }
    /// True while cells may still be appended.
    [[nodiscard]] bool open() const noexcept;

    /// Appends a cell with the next id and per-kind ordinal. A Finish cell
    /// moves the session to Finished. Throws SessionClosed.
    const Cell& append_cell(CellKind kind, std::string source, std::string purpose_or_spec,
                            std::int64_t created_at_ms);

    /// Appends a result to a Code cell; `result.attempt` is overwritten with
    /// the next consecutive attempt number.
    const ExecutionResult& record_result(std::int64_t cell_id, ExecutionResult result);

    /// Replaces the source of a Code cell (retry rewrite). The previous
    /// source is kept in the trace.
    void replace_source(std::int64_t cell_id, std::string source, std::int64_t now_ms);

    void set_status(SessionStatus status);
    /// Consumes one orchestrator decision. Throws LimitReached when the
    /// step budget is already exhausted.
    void count_step();
    void add_trace(std::int64_t time_ms, std::string event, nlohmann::json data = nlohmann::json::object());

    /// Clears the transcript; spec and config survive.
    void reset();

    /// Only allowed while not Running. Raising max_steps on a session that
    /// stopped at the limit makes it resumable again.
    void update_config(RunConfig config);

    bool operator==(const Session& other) const;

private:
    friend Session new_session(ProjectSpec spec, RunConfig config, std::string session_id);
    explicit Session(State state) : state_(std::move(state)) {}

    Cell& mutable_cell(std::int64_t id);

    State state_;
};

/// Throws InvalidSpec / InvalidConfig.
Session new_session(ProjectSpec spec, RunConfig config, std::string session_id);
/// Same, with a freshly generated random id.
Session new_session(ProjectSpec spec, RunConfig config);

std::string generate_session_id();

// ---------------------------------------------------------------------------
// Enum names (snake_case, as used on the wire and in run files)
// ---------------------------------------------------------------------------

std::string_view to_string(CellKind kind) noexcept;
std::string_view to_string(ExecStatus status) noexcept;
std::string_view to_string(SessionStatus status) noexcept;
std::string_view to_string(AgentRole role) noexcept;
std::string_view to_string(ToolMode mode) noexcept;

std::optional<CellKind> parse_cell_kind(std::string_view s) noexcept;
std::optional<ExecStatus> parse_exec_status(std::string_view s) noexcept;
std::optional<SessionStatus> parse_session_status(std::string_view s) noexcept;
std::optional<AgentRole> parse_agent_role(std::string_view s) noexcept;
std::optional<ToolMode> parse_tool_mode(std::string_view s) noexcept;

} // namespace dsagent
