// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dsagent/domain.hpp"
#include "dsagent/llm_gateway.hpp"
#include "dsagent/prompts.hpp"
#include "dsagent/sandbox.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dsagent::testing {

/// Text drawn from ASCII, multi-byte UTF-8, newlines and JSON/Markdown
/// punctuation. Always valid UTF-8.
std::string random_text(std::mt19937_64& rng, std::size_t max_chars);
/// `n` lines of random text joined by '\n', optionally newline-terminated.
std::string random_lines(std::mt19937_64& rng, std::size_t n);

struct GenOptions {
    int max_cells = 20;
    int max_output_lines = 200;
    std::size_t max_source_chars = 300;
    /// Include SessionStatus::Running among the generated statuses.
    bool allow_running = false;
};

/// A random session satisfying every Session invariant.
Session random_session(std::mt19937_64& rng, const GenOptions& options = {});

/// Executor that hands each source to a callback. Counts resets.
class FakeExecutor final : public CellExecutor {
public:
    using Handler = std::function<ExecutionResult(std::string_view)>;
    explicit FakeExecutor(Handler handler);
    /// Default handler: see python_like().
    FakeExecutor();

    ExecutionResult execute_cell(std::string_view source, std::chrono::milliseconds timeout) override;
    void reset() override { ++resets; }

    std::vector<std::string> sources;
    int resets = 0;

private:
    Handler handler_;
};

/// Understands just enough Python for tests: every `print('x')` line adds
/// "x\n" to stdout, and a line starting with `raise` fails the cell with a
/// traceback on stderr.
ExecutionResult python_like(std::string_view source);

ScriptedReply tool(const std::string& name, const std::string& field = {}, const std::string& value = {});

ProjectSpec sample_spec();
PromptSet test_prompts();

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

std::string read_file(const std::filesystem::path& path);

} // namespace dsagent::testing
