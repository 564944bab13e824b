// SPDX-License-Identifier: Apache-2.0
#include "subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>
#include <thread>
#include <utility>

namespace dsagent::detail {

namespace {

[[noreturn]] void throw_errno(const char* what)
{
    throw std::system_error(errno, std::generic_category(), what);
}

std::vector<char*> c_strings(std::vector<std::string>& items)
{
    std::vector<char*> out;
    out.reserve(items.size() + 1);
    for (auto& s : items) {
        out.push_back(s.data());
    }
    out.push_back(nullptr);
    return out;
}

void close_fd(int& fd) noexcept
{
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

} // namespace

Subprocess Subprocess::spawn(const Options& options)
{
    // Writing to a dead interpreter must surface as EPIPE, not kill us.
    ::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw_errno("pipe");
    }
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw_errno("pipe");
    }
    int err_fd = -1;
    if (!options.stderr_path.empty()) {
        err_fd = ::open(options.stderr_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    }
    if (err_fd < 0) {
        err_fd = ::open("/dev/null", O_WRONLY | O_CLOEXEC);
    }

    auto argv_storage = options.argv;
    auto argv = c_strings(argv_storage);
    std::vector<std::string> env_storage = options.env.value_or(std::vector<std::string>{});
    auto envp = c_strings(env_storage);
    const std::string cwd = options.cwd.string();

    const pid_t pid = ::fork();
    if (pid < 0) {
        throw_errno("fork");
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_fd, STDERR_FILENO);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
            ::_exit(126);
        }
        ::signal(SIGPIPE, SIG_DFL);
        if (options.env) {
            ::execvpe(argv[0], argv.data(), envp.data());
        } else {
            ::execvp(argv[0], argv.data());
        }
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_fd);

    Subprocess p;
    p.pid_ = pid;
    p.in_fd_ = in_pipe[1];
    p.out_fd_ = out_pipe[0];
    return p;
}

Subprocess::Subprocess(Subprocess&& other) noexcept
    : pid_(other.pid_), in_fd_(other.in_fd_), out_fd_(other.out_fd_), exit_code_(other.exit_code_)
{
    other.pid_ = -1;
    other.in_fd_ = -1;
    other.out_fd_ = -1;
}

Subprocess& Subprocess::operator=(Subprocess&& other) noexcept
{
    if (this != &other) {
        kill();
        pid_ = std::exchange(other.pid_, -1);
        in_fd_ = std::exchange(other.in_fd_, -1);
        out_fd_ = std::exchange(other.out_fd_, -1);
        exit_code_ = other.exit_code_;
    }
    return *this;
}

Subprocess::~Subprocess()
{
    kill();
}

bool Subprocess::write_all(std::string_view data)
{
    while (!data.empty()) {
        if (in_fd_ < 0) {
            return false;
        }
        const auto n = ::write(in_fd_, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

void Subprocess::close_stdin()
{
    close_fd(in_fd_);
}

Subprocess::ReadStatus Subprocess::read_exact(std::string& out, std::size_t n,
                                              std::chrono::steady_clock::time_point deadline)
{
    char buf[65536];
    while (n > 0) {
        if (out_fd_ < 0) {
            return ReadStatus::Eof;
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            return ReadStatus::Timeout;
        }
        pollfd pfd{out_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<std::int64_t>(remaining.count(), 1 << 30)));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            return ReadStatus::Eof;
        }
        if (ready == 0) {
            return ReadStatus::Timeout;
        }
        const auto got = ::read(out_fd_, buf, std::min(n, sizeof buf));
        if (got < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            return ReadStatus::Eof;
        }
        if (got == 0) {
            return ReadStatus::Eof;
        }
        out.append(buf, static_cast<std::size_t>(got));
        n -= static_cast<std::size_t>(got);
    }
    return ReadStatus::Ok;
}

std::optional<int> Subprocess::poll_exit()
{
    if (exit_code_ || pid_ <= 0) {
        return exit_code_;
    }
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    }
    return exit_code_;
}

int Subprocess::wait(std::chrono::steady_clock::time_point deadline)
{
    while (!poll_exit()) {
        if (std::chrono::steady_clock::now() >= deadline) {
            kill();
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return exit_code_.value_or(-1);
}

void Subprocess::kill()
{
    if (pid_ > 0) {
        if (!exit_code_) {
            ::kill(-pid_, SIGKILL);
            ::kill(pid_, SIGKILL);
            int status = 0;
            while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
            }
            exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        }
    }
    release();
}

void Subprocess::release() noexcept
{
    close_fd(in_fd_);
    close_fd(out_fd_);
    pid_ = -1;
}

CommandResult run_command(const std::vector<std::string>& argv, std::chrono::milliseconds timeout,
                          std::optional<std::vector<std::string>> env)
{
    CommandResult result;
    Subprocess::Options opts;
    opts.argv = argv;
    opts.env = std::move(env);
    Subprocess p;
    try {
        p = Subprocess::spawn(opts);
    } catch (const std::system_error&) {
        return result;
    }
    p.close_stdin();
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        std::string chunk;
        const auto st = p.read_exact(chunk, 1, deadline);
        result.output += chunk;
        if (st == Subprocess::ReadStatus::Timeout) {
            result.timed_out = true;
            p.kill();
            return result;
        }
        if (st == Subprocess::ReadStatus::Eof) {
            break;
        }
    }
    result.exit_code = p.wait(deadline);
    return result;
}

} // namespace dsagent::detail
