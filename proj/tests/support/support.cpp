// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <fstream>
#include <sstream>

namespace dsagent::testing {

namespace {

template <typename T>
T pick(std::mt19937_64& rng, const std::vector<T>& items)
{
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

int uniform(std::mt19937_64& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool chance(std::mt19937_64& rng, double p)
{
    return std::bernoulli_distribution(p)(rng);
}

const std::vector<std::string>& alphabet()
{
    static const std::vector<std::string> a = {
        "a", "b", "c", "x", "y", "z", "0", "1", "9", " ", " ", " ", "_", "-", ".", ",", ":", "=",
        "(", ")", "[", "]", "{", "}", "\"", "'", "\\", "`", "```", "#", "*", "\t",
        "\xC3\xA9",         // é
        "\xC3\x9F",         // ß
        "\xE4\xB8\xAD",     // 中
        "\xE2\x82\xAC",     // €
        "\xF0\x9F\x98\x80", // 😀
        "\xF0\x9D\x94\xB8", // 𝔸
    };
    return a;
}

} // namespace

std::string random_text(std::mt19937_64& rng, std::size_t max_chars)
{
    const auto n = std::uniform_int_distribution<std::size_t>(0, max_chars)(rng);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += chance(rng, 0.04) ? std::string("\n") : pick(rng, alphabet());
    }
    return out;
}

std::string random_lines(std::mt19937_64& rng, std::size_t n)
{
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            out += '\n';
        }
        std::string line = random_text(rng, 30);
        for (auto& c : line) {
            c = c == '\n' ? ' ' : c;
        }
        out += line;
    }
    if (n > 0 && chance(rng, 0.7)) {
        out += '\n';
    }
    return out;
}

Session random_session(std::mt19937_64& rng, const GenOptions& options)
{
    Session::State s;
    s.session_id = "fuzz-" + std::to_string(rng() % 1000000);
    s.spec.task_description = "Task " + random_text(rng, 60) + "!";
    for (int i = uniform(rng, 0, 3); i > 0; --i) {
        s.spec.general_instructions.emplace_back("key" + std::to_string(i), random_text(rng, 20));
    }
    s.spec.data_description = chance(rng, 0.5) ? random_text(rng, 80) : "";
    s.spec.data_location = chance(rng, 0.5) ? "data/train.csv" : "";
    s.spec.metrics = chance(rng, 0.5) ? random_text(rng, 30) : "";
    s.spec.inputs = chance(rng, 0.3) ? random_text(rng, 30) : "";
    s.spec.outputs = chance(rng, 0.3) ? random_text(rng, 30) : "";
    s.spec.special_instructions = chance(rng, 0.3) ? random_text(rng, 30) : "";

    auto& c = s.config;
    c.max_steps = uniform(rng, 20, 40);
    c.max_code_retries = uniform(rng, 0, 5);
    c.history_char_limit = pick(rng, std::vector<int>{200, 1000, 3000, 10000, 20000});
    c.head_tail_lines = uniform(rng, 1, 30);
    c.orchestrator.temperature = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    c.text_agent.temperature = uniform(rng, 0, 20) / 10.0;
    c.code_agent.model = chance(rng, 0.3) ? "model-" + std::to_string(uniform(rng, 1, 9)) : "";
    c.tool_mode = chance(rng, 0.5) ? ToolMode::NativeToolCalls : ToolMode::EmulatedJson;
    c.cell_timeout_ms = uniform(rng, 100, 200000);
    c.network_enabled = chance(rng, 0.2);

    const int n = uniform(rng, 0, options.max_cells);
    std::array<int, 3> ordinal{};
    std::int64_t id = 0;
    for (int i = 0; i < n; ++i) {
        Cell cell;
        const bool last = i + 1 == n;
        cell.kind = last && chance(rng, 0.3) ? CellKind::Finish
                                             : (chance(rng, 0.5) ? CellKind::Code : CellKind::Text);
        cell.id = (id += uniform(rng, 1, 3));
        cell.ordinal = ++ordinal[static_cast<std::size_t>(cell.kind)];
        cell.created_at_ms = 1'700'000'000'000 + i * 1000;
        cell.source = random_text(rng, options.max_source_chars);
        cell.purpose_or_spec = cell.kind == CellKind::Finish ? "" : random_text(rng, 40);
        if (cell.kind == CellKind::Code) {
            const int attempts = uniform(rng, 0, 4);
            for (int a = 1; a <= attempts; ++a) {
                ExecutionResult r;
                r.attempt = a;
                const int roll = uniform(rng, 0, 9);
                r.status = roll < 6 ? ExecStatus::Success : (roll < 9 ? ExecStatus::Error : ExecStatus::Timeout);
                r.stdout_text = random_lines(rng, static_cast<std::size_t>(uniform(rng, 0, options.max_output_lines)));
                r.stderr_text = random_lines(rng, static_cast<std::size_t>(uniform(rng, 0, options.max_output_lines)));
                if (r.status == ExecStatus::Error && r.stderr_text.empty()) {
                    r.stderr_text = "Traceback (most recent call last):\nValueError: x\n";
                }
                r.duration_ms = uniform(rng, 0, 100000);
                if (chance(rng, 0.2)) {
                    r.artifacts_written = {"plots/p" + std::to_string(a) + ".png", "metrics.ndjson"};
                }
                cell.results.push_back(std::move(r));
            }
        }
        s.cells.push_back(std::move(cell));
    }

    if (!s.cells.empty() && s.cells.back().kind == CellKind::Finish) {
        s.status = SessionStatus::Finished;
    } else {
        std::vector<SessionStatus> statuses{SessionStatus::Idle, SessionStatus::AwaitingNextStep,
                                            SessionStatus::StoppedMaxSteps, SessionStatus::Failed};
        if (options.allow_running) {
            statuses.push_back(SessionStatus::Running);
        }
        s.status = s.cells.empty() && chance(rng, 0.5) ? SessionStatus::Idle : pick(rng, statuses);
    }
    s.step_count = std::min<int>(static_cast<int>(s.cells.size()) + uniform(rng, 0, 2), c.max_steps);

    for (int i = uniform(rng, 0, 6); i > 0; --i) {
        TraceRecord t;
        t.time_ms = 1'700'000'000'000 + i;
        t.event = pick(rng, std::vector<std::string>{"render", "action", "execution", "status", "retry"});
        t.data = {{"step", i},
                  {"ratio", std::uniform_real_distribution<double>(-1e6, 1e6)(rng)},
                  {"text", random_text(rng, 20)},
                  {"nested", {{"flag", chance(rng, 0.5)}, {"list", {1, 2.5, "three"}}}}};
        s.trace.push_back(std::move(t));
    }
    return Session::restore(std::move(s));
}

FakeExecutor::FakeExecutor(Handler handler) : handler_(std::move(handler)) {}
FakeExecutor::FakeExecutor() : handler_(python_like) {}

ExecutionResult FakeExecutor::execute_cell(std::string_view source, std::chrono::milliseconds)
{
    sources.emplace_back(source);
    return handler_(source);
}

ExecutionResult python_like(std::string_view source)
{
    ExecutionResult r;
    r.duration_ms = 5;
    std::istringstream in{std::string(source)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("raise", 0) == 0) {
            r.status = ExecStatus::Error;
            r.stderr_text = "Traceback (most recent call last):\n  File \"<cell>\", line 1, in <module>\nRuntimeError: " +
                            line + "\n";
            return r;
        }
        const auto open = line.find("print('");
        const auto close = line.rfind("')");
        if (open != std::string::npos && close != std::string::npos && close > open + 7) {
            r.stdout_text += line.substr(open + 7, close - open - 7) + "\n";
        }
    }
    return r;
}

ScriptedReply tool(const std::string& name, const std::string& field, const std::string& value)
{
    ToolCall call;
    call.name = name;
    auto args = nlohmann::json::object();
    if (!field.empty()) {
        args[field] = value;
    }
    call.arguments_json = args.dump();
    return call;
}

ProjectSpec sample_spec()
{
    ProjectSpec spec;
    spec.general_instructions = {{"estimated_steps", "10-20"}, {"plots", "at least two"}};
    spec.task_description = "Predict which response users prefer.";
    spec.data_description = "Pairs of chat responses with a preference label.";
    spec.metrics = "log loss";
    return spec;
}

PromptSet test_prompts()
{
    return PromptSet::load(default_prompts_dir());
}

std::filesystem::path temp_dir(const std::string& tag)
{
    static std::mt19937_64 rng{std::random_device{}()};
    auto dir = std::filesystem::temp_directory_path() / ("dsagent-test-" + tag + "-" + std::to_string(rng() % 100000000));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace dsagent::testing
