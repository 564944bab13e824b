// SPDX-License-Identifier: Apache-2.0
#include "dsagent/orchestrator.hpp"

#include "dsagent/action_parser.hpp"
#include "dsagent/codec.hpp"
#include "dsagent/history_renderer.hpp"

namespace dsagent {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_parse_error(ErrorCode code)
{
    switch (code) {
    case ErrorCode::UnknownAction:
    case ErrorCode::MissingField:
    case ErrorCode::UnexpectedField:
    case ErrorCode::InvalidFieldType:
    case ErrorCode::NoJsonFound: return true;
    default: return false;
    }
}

int next_ordinal(const Session& session, CellKind kind)
{
    int n = 1;
    for (const auto& c : session.cells()) {
        n += c.kind == kind ? 1 : 0;
    }
    return n;
}

json with_sizes(json data, const RenderSize& size)
{
    data["untruncated_chars"] = size.untruncated_chars;
    data["emitted_chars"] = size.emitted_chars;
    data["truncated"] = size.truncated;
    return data;
}

} // namespace

std::string extract_code(std::string_view reply)
{
    const auto fence = reply.find("```");
    if (fence == std::string_view::npos) {
        return std::string(trim(reply)) + "\n";
    }
    auto body_start = reply.find('\n', fence);
    if (body_start == std::string_view::npos) {
        return "\n";
    }
    ++body_start;
    std::size_t end = reply.size();
    for (std::size_t pos = body_start; pos < reply.size();) {
        const auto eol = reply.find('\n', pos);
        const auto line = reply.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        if (trim(line).starts_with("```")) {
            end = pos;
            break;
        }
        if (eol == std::string_view::npos) {
            break;
        }
        pos = eol + 1;
    }
    auto body = reply.substr(body_start, end - body_start);
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r' || body.back() == ' ')) {
        body.remove_suffix(1);
    }
    return std::string(body) + "\n";
}

std::string extract_markdown(std::string_view reply)
{
    auto text = trim(reply);
    for (std::string_view open : {"```markdown", "```md"}) {
        if (text.starts_with(open) && text.size() > open.size() + 3 && text.ends_with("```")) {
            const auto nl = text.find('\n');
            if (nl != std::string_view::npos && nl < text.size() - 3) {
                return std::string(trim(text.substr(nl + 1, text.size() - 3 - nl - 1)));
            }
        }
    }
    return std::string(text);
}

Orchestrator::Orchestrator(const LlmGateway& gateway, CellExecutor& executor, PromptSet prompts, Clock& clock)
    : gateway_(gateway), executor_(executor), prompts_(std::move(prompts)), clock_(clock)
{
}

void Orchestrator::emit(std::string type, json data) const
{
    if (observer_) {
        observer_(EngineEvent{std::move(type), std::move(data)});
    }
}

void Orchestrator::trace(Session& session, std::string event, json data) const
{
    session.add_trace(clock_.now_ms(), event, data);
    emit(std::move(event), std::move(data));
}

ChatRequest Orchestrator::make_request(const Session& session, AgentRole role, std::string instruction) const
{
    const auto& cfg = session.config();
    ChatRequest req;
    req.role = role;
    req.system_prompt = prompts_.system_prompt(role, cfg.tool_mode);
    req.rendered_context = render_history(session);
    req.instruction = std::move(instruction);
    req.temperature = cfg.agent(role).temperature;
    req.model = cfg.agent(role).model;
    if (role == AgentRole::Orchestrator && cfg.tool_mode == ToolMode::NativeToolCalls) {
        req.structured_schema = action_tool_definitions();
    }
    return req;
}

OrchestratorAction Orchestrator::decide(Session& session, const std::string& context)
{
    auto req = make_request(session, AgentRole::Orchestrator, "Choose the next action.");
    req.rendered_context = context;
    const auto first = gateway_.complete(req);
    std::string first_error;
    try {
        return parse_action(first, session.config().tool_mode);
    } catch (const Error& e) {
        if (!is_parse_error(e.code())) {
            throw;
        }
        first_error = e.what();
        trace(session, "parse_error", {{"attempt", 1}, {"error", first_error}});
    }

    // One corrective re-ask.
    req.instruction = "Your previous reply could not be used: " + first_error +
                      ". Reply with exactly one valid action: request_text with \"spec\", request_code with "
                      "\"purpose\", or finish with an optional \"summary_hint\".";
    try {
        const auto second = gateway_.complete(req);
        return parse_action(second, session.config().tool_mode);
    } catch (const Error& e) {
        if (!is_parse_error(e.code())) {
            throw;
        }
        trace(session, "parse_error", {{"attempt", 2}, {"error", e.what()}});
        throw Error(ErrorCode::ActionParseFailure, std::string("orchestrator reply unusable after re-ask: ") + e.what());
    }
}

StepOutcome Orchestrator::step(Session& session)
{
    switch (session.status()) {
    case SessionStatus::Idle:
    case SessionStatus::AwaitingNextStep: break;
    case SessionStatus::StoppedMaxSteps:
        throw Error(ErrorCode::LimitReached, "session stopped at its step limit");
    case SessionStatus::Running: throw Error(ErrorCode::InvalidState, "a step is already running");
    case SessionStatus::Finished:
    case SessionStatus::Failed:
        throw Error(ErrorCode::SessionClosed,
                    "session is " + std::string(to_string(session.status())) + " and cannot step");
    }
    if (session.step_count() >= session.config().max_steps) {
        session.set_status(SessionStatus::StoppedMaxSteps);
        trace(session, "status", {{"status", to_string(session.status())}, {"reason", "max_steps"}});
        throw Error(ErrorCode::LimitReached, "step budget of " + std::to_string(session.config().max_steps) +
                                                 " orchestrator decisions is exhausted");
    }

    const auto previous = session.status();
    session.set_status(SessionStatus::Running);

    const auto opts = RenderOptions::from(session.config());
    const auto context = render_history(session, opts);
    trace(session, "render",
          with_sizes({{"step", session.step_count() + 1}, {"role", "orchestrator"}},
                     render_size_report(session, opts)));

    OrchestratorAction action;
    try {
        action = decide(session, context);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ActionParseFailure) {
            session.set_status(SessionStatus::Failed);
            trace(session, "status", {{"status", to_string(session.status())}, {"reason", e.what()}});
            throw;
        }
        session.set_status(previous);
        trace(session, "failure", {{"stage", "orchestrator"}, {"error", e.what()}});
        throw;
    }

    session.count_step();
    trace(session, "action", {{"step", session.step_count()}, {"action", to_json(action)}});

    StepOutcome outcome;
    outcome.action_taken = action;
    try {
        if (const auto* text = std::get_if<RequestText>(&action)) {
            const auto ordinal = next_ordinal(session, CellKind::Text);
            const auto reply = gateway_.complete(make_request(
                session, AgentRole::TextAgent,
                "Write Text #" + std::to_string(ordinal) + ". Brief from the orchestrator: " + text->spec));
            const auto& cell = session.append_cell(CellKind::Text, extract_markdown(reply.raw_text), text->spec,
                                                   clock_.now_ms());
            outcome.cell_id = cell.id;
            emit("cell_added", codec::to_json(cell));
        } else if (const auto* code = std::get_if<RequestCode>(&action)) {
            const auto ordinal = next_ordinal(session, CellKind::Code);
            const auto reply = gateway_.complete(
                make_request(session, AgentRole::CodeAgent,
                             "Write Code #" + std::to_string(ordinal) + ". Purpose: " + code->purpose));
            const auto& cell =
                session.append_cell(CellKind::Code, extract_code(reply.raw_text), code->purpose, clock_.now_ms());
            outcome.cell_id = cell.id;
            emit("cell_added", codec::to_json(cell));
            outcome.execution = retry_code_loop(session, cell.id);
        } else {
            const auto& finish = std::get<Finish>(action);
            const auto source =
                finish.summary_hint ? "Finished: " + *finish.summary_hint : std::string(kDefaultFinishText);
            const auto& cell = session.append_cell(CellKind::Finish, source, "", clock_.now_ms());
            outcome.cell_id = cell.id;
            emit("cell_added", codec::to_json(cell));
        }
    } catch (const Error& e) {
        session.set_status(SessionStatus::Failed);
        trace(session, "failure", {{"stage", action_name(action)}, {"error", e.what()}});
        trace(session, "status", {{"status", to_string(session.status())}, {"reason", e.what()}});
        throw;
    }

    if (session.status() == SessionStatus::Running) {
        session.set_status(session.step_count() >= session.config().max_steps ? SessionStatus::StoppedMaxSteps
                                                                               : SessionStatus::AwaitingNextStep);
    }
    outcome.halted = session.status() != SessionStatus::AwaitingNextStep;
    trace(session, "status", {{"status", to_string(session.status())}, {"step", session.step_count()}});
    return outcome;
}

ExecutionResult Orchestrator::retry_code_loop(Session& session, std::int64_t cell_id)
{
    const auto timeout = std::chrono::milliseconds(session.config().cell_timeout_ms);
    for (;;) {
        const auto& cell = session.cell(cell_id);
        auto result = executor_.execute_cell(cell.source, timeout);
        const auto& recorded = session.record_result(cell_id, std::move(result));
        trace(session, "execution",
              {{"cell_id", cell_id},
               {"attempt", recorded.attempt},
               {"status", to_string(recorded.status)},
               {"duration_ms", recorded.duration_ms},
               {"artifacts_written", recorded.artifacts_written}});
        emit("cell_updated", codec::to_json(session.cell(cell_id)));

        const auto& current = session.cell(cell_id);
        const int rewrites = static_cast<int>(current.results.size()) - 1;
        if (recorded.status == ExecStatus::Success || rewrites >= session.config().max_code_retries) {
            return current.results.back();
        }

        const auto opts = RenderOptions::from(session.config());
        trace(session, "retry",
              with_sizes({{"cell_id", cell_id}, {"rewrite", rewrites + 1}}, render_size_report(session, opts)));
        const auto reply = gateway_.complete(make_request(
            session, AgentRole::CodeAgent,
            "Code #" + std::to_string(current.ordinal) +
                " failed with the error shown above. Rewrite the complete cell so that it runs. Purpose: " +
                current.purpose_or_spec));
        session.replace_source(cell_id, extract_code(reply.raw_text), clock_.now_ms());
        emit("cell_updated", codec::to_json(session.cell(cell_id)));
    }
}

void Orchestrator::autorun(Session& session, std::stop_token stop)
{
    switch (session.status()) {
    case SessionStatus::Finished:
    case SessionStatus::Failed:
    case SessionStatus::StoppedMaxSteps: return;
    case SessionStatus::Running: throw Error(ErrorCode::InvalidState, "a step is already running");
    default: break;
    }
    const auto opts = RenderOptions::from(session.config());
    while (!stop.stop_requested()) {
        StepOutcome outcome;
        try {
            outcome = step(session);
        } catch (const Error& e) {
            if (session.status() == SessionStatus::Failed || session.status() == SessionStatus::StoppedMaxSteps) {
                return;
            }
            throw;
        }
        trace(session, "autorun",
              with_sizes({{"step", session.step_count()}, {"action", action_name(outcome.action_taken)}},
                         render_size_report(session, opts)));
        if (outcome.halted) {
            return;
        }
    }
}

void Orchestrator::replay(Session& session)
{
    const auto timeout = std::chrono::milliseconds(session.config().cell_timeout_ms);
    int replayed = 0;
    for (const auto& cell : session.cells()) {
        if (cell.kind == CellKind::Code && !cell.results.empty() && !cell.failed()) {
            executor_.execute_cell(cell.source, timeout);
            ++replayed;
        }
    }
    trace(session, "replay", {{"cells", replayed}});
}

} // namespace dsagent
