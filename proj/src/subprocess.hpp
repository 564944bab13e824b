// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dsagent::detail {

/// Child process in its own process group with piped stdin/stdout.
class Subprocess {
public:
    enum class ReadStatus { Ok, Timeout, Eof };

    struct Options {
        std::vector<std::string> argv;
        /// Full environment; nullopt inherits the parent's.
        std::optional<std::vector<std::string>> env;
        /// stderr goes here (appending); empty discards it.
        std::filesystem::path stderr_path;
        std::filesystem::path cwd;
    };

    /// Throws std::system_error when fork/exec plumbing fails.
    static Subprocess spawn(const Options& options);

    Subprocess() = default;
    Subprocess(Subprocess&& other) noexcept;
    Subprocess& operator=(Subprocess&& other) noexcept;
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;
    ~Subprocess();

    [[nodiscard]] pid_t pid() const noexcept { return pid_; }
    [[nodiscard]] bool valid() const noexcept { return pid_ > 0; }

    /// False when the child closed its stdin.
    bool write_all(std::string_view data);
    void close_stdin();

    /// Reads exactly `n` bytes into `out` (appending) before `deadline`.
    ReadStatus read_exact(std::string& out, std::size_t n, std::chrono::steady_clock::time_point deadline);

    /// SIGKILLs the whole process group and reaps the child. Idempotent.
    void kill();
    /// Exit code once the child has exited, without blocking.
    std::optional<int> poll_exit();
    /// Blocks until exit or deadline; kills on deadline.
    int wait(std::chrono::steady_clock::time_point deadline);

private:
    void release() noexcept;

    pid_t pid_ = -1;
    int in_fd_ = -1;
    int out_fd_ = -1;
    std::optional<int> exit_code_;
};

struct CommandResult {
    int exit_code = -1;
    std::string output; // stdout only
    bool timed_out = false;
};

/// Runs a short command to completion (stdout captured, stderr discarded).
CommandResult run_command(const std::vector<std::string>& argv, std::chrono::milliseconds timeout,
                          std::optional<std::vector<std::string>> env = std::nullopt);

} // namespace dsagent::detail
