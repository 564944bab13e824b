// SPDX-License-Identifier: Apache-2.0
//
// The routing loop. One step renders the history, asks the orchestrator
// model for a single action and dispatches it:
//   request_text -> text agent -> Text cell
//   request_code -> code agent -> Code cell, executed with bounded rewrites
//   finish       -> Finish cell, session Finished
// Agents only ever see the rendered history, never raw cell output.
#pragma once

#include "dsagent/clock.hpp"
#include "dsagent/domain.hpp"
#include "dsagent/llm_gateway.hpp"
#include "dsagent/prompts.hpp"
#include "dsagent/sandbox.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <stop_token>
#include <string>

namespace dsagent {

struct StepOutcome {
    OrchestratorAction action_taken;
    std::optional<std::int64_t> cell_id;
    std::optional<ExecutionResult> execution;
    bool halted = false;
};

/// Progress notification. `type` is one of: render, action, cell_added,
/// cell_updated, execution, retry, parse_error, status, autorun, failure.
struct EngineEvent {
    std::string type;
    nlohmann::json data;
};

using EventObserver = std::function<void(const EngineEvent&)>;

inline constexpr std::string_view kDefaultFinishText = "Finished: the solution is complete.";

class Orchestrator {
public:
    Orchestrator(const LlmGateway& gateway, CellExecutor& executor, PromptSet prompts, Clock& clock);

    void set_observer(EventObserver observer) { observer_ = std::move(observer); }

    /// Consumes exactly one orchestrator decision.
    /// Throws LimitReached (session -> StoppedMaxSteps), ActionParseFailure
    /// (after one corrective re-ask; session -> Failed), SessionClosed and
    /// InvalidState for sessions that cannot step. Backend failures while
    /// asking the orchestrator leave the session as it was; failures after
    /// the decision was taken fail the session.
    StepOutcome step(Session& session);

    /// Executes a Code cell, asking the code agent for a full rewrite after
    /// each failure, at most config.max_code_retries times. Returns the last
    /// result; exhausted retries are not an error.
    ExecutionResult retry_code_loop(Session& session, std::int64_t cell_id);

    /// Steps until the session halts or `stop` is requested (checked between
    /// steps). No-op for sessions that are already terminal.
    void autorun(Session& session, std::stop_token stop = {});

    /// Re-executes the final source of every successful Code cell, without
    /// recording results. Used after resuming a saved run, whose interpreter
    /// state is gone.
    void replay(Session& session);

private:
    ChatRequest make_request(const Session& session, AgentRole role, std::string instruction) const;
    OrchestratorAction decide(Session& session, const std::string& context);
    void emit(std::string type, nlohmann::json data) const;
    void trace(Session& session, std::string event, nlohmann::json data) const;

    const LlmGateway& gateway_;
    CellExecutor& executor_;
    PromptSet prompts_;
    Clock& clock_;
    EventObserver observer_;
};

/// Code from a code-agent reply: the first fenced block if there is one,
/// otherwise the whole reply.
std::string extract_code(std::string_view reply);

/// Markdown from a text-agent reply, with an enclosing markdown fence removed.
std::string extract_markdown(std::string_view reply);

} // namespace dsagent
