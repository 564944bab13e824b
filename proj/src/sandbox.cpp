// SPDX-License-Identifier: Apache-2.0
#include "dsagent/sandbox.hpp"

#include "dsagent/frame_protocol.hpp"
#include "dsagent/utf8.hpp"
#include "subprocess.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

namespace dsagent {

namespace fs = std::filesystem;
using detail::Subprocess;

namespace {

// Builds the jail inside fresh user+mount(+pid,+net) namespaces and execs
// the interpreter in it. Positional arguments:
//   $1 jail root   $2 image root ("" = host)   $3 data path   $4 data target
//   $5 workspace   $6 assets                   $7 kernel      $8 python
constexpr std::string_view kJailScript = R"sh(set -eu
R=$1; SRC=$2; DATA=$3; DATA_T=$4; WS=$5; AS=$6; K=$7; PY=$8; ENTER=$9
for d in usr bin sbin lib lib32 lib64 libx32 etc; do
  [ -e "$SRC/$d" ] || continue
  if [ -L "$SRC/$d" ]; then ln -sfn "$(readlink "$SRC/$d")" "$R/$d"; continue; fi
  mkdir -p "$R/$d"
  mount --rbind "$SRC/$d" "$R/$d"
  mount -o remount,bind,ro "$R/$d"
done
mkdir -p "$R/data" "$R/work" "$R/assets" "$R/tmp" "$R/dev" "$R/proc" "$R/opt/kernel"
if [ -n "$DATA" ]; then
  if [ -d "$DATA" ]; then
    mount --bind "$DATA" "$R/data"; mount -o remount,bind,ro "$R/data"
  else
    : > "$R$DATA_T"; mount --bind "$DATA" "$R$DATA_T"; mount -o remount,bind,ro "$R$DATA_T"
  fi
fi
mount --bind "$WS" "$R/work"
mount --bind "$AS" "$R/assets"
: > "$R/opt/kernel/cell_kernel.py"
mount --bind "$K" "$R/opt/kernel/cell_kernel.py"
mount -o remount,bind,ro "$R/opt/kernel/cell_kernel.py"
mount -t tmpfs -o size=512m tmpfs "$R/tmp"
mount -t tmpfs tmpfs "$R/dev"
for n in null zero full random urandom; do : > "$R/dev/$n"; mount --bind "/dev/$n" "$R/dev/$n"; done
cd /
LAUNCH='mount -t proc proc "$1/proc" 2>/dev/null || true; exec chroot "$1" "$2" -u /opt/kernel/cell_kernel.py'
case "$ENTER" in
  here) exec sh -c "$LAUNCH" launch "$R" "$PY" ;;
  userns) exec unshare --user --map-root-user --mount --pid --fork --kill-child sh -c "$LAUNCH" launch "$R" "$PY" ;;
  userns-net) exec unshare --user --map-root-user --mount --pid --fork --kill-child --net sh -c "$LAUNCH" launch "$R" "$PY" ;;
esac
)sh";

// Mount sources are looked up after unshare. Inside a user namespace,
// directories owned by unmapped users (say a 0700 home of another uid) cannot
// be traversed, so real root builds the jail in a plain mount namespace first
// and only then drops into the user namespace.
bool privileged_setup()
{
    static const bool privileged = [] {
        using namespace std::chrono_literals;
        return ::geteuid() == 0 && detail::run_command({"unshare", "--mount", "true"}, 10s).exit_code == 0;
    }();
    return privileged;
}

constexpr std::string_view kSandboxPath = "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin";

using FileIndex = std::map<std::string, std::pair<fs::file_time_type, std::uintmax_t>>;

FileIndex index_files(const fs::path& root)
{
    FileIndex index;
    std::error_code ec;
    if (root.empty() || !fs::is_directory(root, ec)) {
        return index;
    }
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (!it->is_regular_file(ec)) {
            continue;
        }
        const auto rel = fs::relative(it->path(), root, ec).generic_string();
        index[rel] = {it->last_write_time(ec), it->file_size(ec)};
    }
    return index;
}

std::vector<std::string> changed_files(const FileIndex& before, const FileIndex& after)
{
    std::vector<std::string> out;
    for (const auto& [path, stamp] : after) {
        auto it = before.find(path);
        if (it == before.end() || it->second != stamp) {
            out.push_back(path);
        }
    }
    return out;
}

std::string tail_of_file(const fs::path& path, std::size_t max_bytes = 2000)
{
    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() > max_bytes) {
        text = text.substr(text.size() - max_bytes);
    }
    return text;
}

bool has_binary(const std::string& name)
{
    if (name.find('/') != std::string::npos) {
        return ::access(name.c_str(), X_OK) == 0;
    }
    for (std::string_view dir : {"/usr/local/sbin", "/usr/local/bin", "/usr/sbin", "/usr/bin", "/sbin", "/bin"}) {
        if (::access((std::string(dir) + "/" + name).c_str(), X_OK) == 0) {
            return true;
        }
    }
    return false;
}

std::string image_root(const SandboxOptions& options)
{
    return options.image == "host" || options.image.empty() ? std::string{} : fs::absolute(options.image).string();
}

std::string timeout_message(std::chrono::milliseconds timeout)
{
    return "Execution timed out after " + std::to_string(timeout.count()) +
           " ms. The interpreter was restarted and all session variables were lost.\n";
}

} // namespace

std::string_view to_string(RuntimeKind kind) noexcept
{
    switch (kind) {
    case RuntimeKind::Namespace: return "namespace";
    case RuntimeKind::Docker: return "docker";
    case RuntimeKind::Process: return "process";
    }
    return "unknown";
}

std::optional<RuntimeKind> parse_runtime_kind(std::string_view s) noexcept
{
    for (auto k : {RuntimeKind::Namespace, RuntimeKind::Docker, RuntimeKind::Process}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

fs::path local_data_path(std::string_view data_location)
{
    if (data_location.empty()) {
        return {};
    }
    constexpr std::string_view file_scheme = "file://";
    if (data_location.starts_with(file_scheme)) {
        return fs::absolute(fs::path(std::string(data_location.substr(file_scheme.size()))));
    }
    if (data_location.find("://") != std::string_view::npos) {
        return {};
    }
    return fs::absolute(fs::path(std::string(data_location)));
}

void probe_runtime(const SandboxOptions& options)
{
    using namespace std::chrono_literals;
    if (options.kernel_path.empty() || !fs::exists(options.kernel_path)) {
        throw Error(ErrorCode::ImageMissing, "interpreter bootstrap not found: '" + options.kernel_path.string() + "'");
    }
    switch (options.runtime) {
    case RuntimeKind::Namespace: {
        if (!has_binary("unshare") || !has_binary("chroot")) {
            throw Error(ErrorCode::RuntimeUnavailable, "unshare(1) and chroot(8) are required");
        }
        std::vector<std::string> check{"unshare", "--user", "--map-root-user", "--mount", "--pid", "--fork", "true"};
        if (privileged_setup()) {
            check.insert(check.begin(), {"unshare", "--mount", "--fork"});
        }
        const auto r = detail::run_command(check, 10s);
        if (r.exit_code != 0) {
            throw Error(ErrorCode::RuntimeUnavailable, "user namespaces are not available on this host");
        }
        const auto root = image_root(options);
        if (!root.empty() && !fs::is_directory(fs::path(root) / "usr")) {
            throw Error(ErrorCode::ImageMissing, "rootfs '" + options.image + "' has no usr/ directory");
        }
        break;
    }
    case RuntimeKind::Docker: {
        const auto version = detail::run_command({options.docker_binary, "version", "--format", "{{.Server.Version}}"}, 15s);
        if (version.exit_code != 0) {
            throw Error(ErrorCode::RuntimeUnavailable, "container runtime '" + options.docker_binary + "' is not reachable");
        }
        const auto inspect = detail::run_command({options.docker_binary, "image", "inspect", options.image}, 15s);
        if (inspect.exit_code != 0) {
            throw Error(ErrorCode::ImageMissing, "image '" + options.image + "' is not available locally");
        }
        break;
    }
    case RuntimeKind::Process: {
        const auto r = detail::run_command({options.python, "-c", "pass"}, 15s);
        if (r.exit_code != 0) {
            throw Error(ErrorCode::RuntimeUnavailable, "interpreter '" + options.python + "' cannot be started");
        }
        break;
    }
    }
}

// ---------------------------------------------------------------------------

struct Sandbox::Impl {
    SandboxOptions options;
    SandboxHandle handle;
    bool network_enabled = false;
    Clock* clock = nullptr;

    fs::path session_dir;
    fs::path jail_root;
    fs::path kernel_log;
    std::string data_target;

    Subprocess proc;
    std::int64_t next_cell_id = 1;
    int generation = 0;

    std::vector<std::string> launch_argv() const
    {
        const auto kernel = fs::absolute(options.kernel_path).string();
        switch (options.runtime) {
        case RuntimeKind::Namespace: {
            std::vector<std::string> argv;
            std::string enter = "here";
            if (privileged_setup()) {
                argv = {"unshare", "--mount", "--fork", "--kill-child"};
                enter = network_enabled ? "userns" : "userns-net";
            } else {
                argv = {"unshare", "--user", "--map-root-user", "--mount", "--pid", "--fork", "--kill-child"};
                if (!network_enabled) {
                    argv.emplace_back("--net");
                }
            }
            argv.insert(argv.end(), {"sh", "-c", std::string(kJailScript), "sandbox-jail", jail_root.string(),
                                     image_root(options), handle.data_mount.string(), data_target,
                                     handle.workspace_mount.string(), handle.assets_mount.string(), kernel,
                                     options.python, enter});
            return argv;
        }
        case RuntimeKind::Docker: {
            std::vector<std::string> argv{options.docker_binary, "run", "-i", "--rm", "--name", handle.container_id};
            if (!network_enabled) {
                argv.insert(argv.end(), {"--network", "none"});
            }
            argv.insert(argv.end(), {"-v", handle.workspace_mount.string() + ":/work", "-v",
                                     handle.assets_mount.string() + ":/assets", "-v",
                                     kernel + ":/opt/kernel/cell_kernel.py:ro"});
            if (!handle.data_mount.empty()) {
                argv.insert(argv.end(), {"-v", handle.data_mount.string() + ":" + data_target + ":ro"});
            }
            for (const auto& kv : container_env()) {
                argv.insert(argv.end(), {"-e", kv});
            }
            argv.insert(argv.end(), {"-w", "/work", options.image, options.python, "-u", "/opt/kernel/cell_kernel.py"});
            return argv;
        }
        case RuntimeKind::Process:
            break;
        }
        return {options.python, "-u", kernel};
    }

    std::vector<std::string> container_env() const
    {
        const bool jailed = options.runtime != RuntimeKind::Process;
        std::vector<std::string> env{
            "LANG=C.UTF-8",
            "PYTHONIOENCODING=utf-8",
            "PYTHONDONTWRITEBYTECODE=1",
            "MPLBACKEND=Agg",
            "TMPDIR=/tmp",
        };
        if (jailed) {
            env.emplace_back("HOME=/work");
            env.emplace_back("WORK_DIR=/work");
            env.emplace_back("ASSETS_DIR=/assets");
            env.emplace_back("DATA_DIR=/data");
        } else {
            env.emplace_back("HOME=" + handle.workspace_mount.string());
            env.emplace_back("WORK_DIR=" + handle.workspace_mount.string());
            env.emplace_back("ASSETS_DIR=" + handle.assets_mount.string());
            env.emplace_back("DATA_DIR=" + handle.data_mount.string());
        }
        return env;
    }

    void start()
    {
        ++generation;
        if (options.runtime == RuntimeKind::Docker) {
            handle.container_id = "dsagent-" + handle.session_id + "-" + std::to_string(generation);
        } else {
            handle.container_id = handle.session_id + "-" + std::to_string(generation);
        }

        Subprocess::Options opts;
        opts.argv = launch_argv();
        opts.stderr_path = kernel_log;
        if (options.runtime != RuntimeKind::Docker) {
            auto env = container_env();
            env.emplace_back("PATH=" + std::string(kSandboxPath));
            opts.env = std::move(env);
        }
        try {
            proc = Subprocess::spawn(opts);
        } catch (const std::system_error& e) {
            throw Error(ErrorCode::RuntimeUnavailable, std::string("cannot start the sandbox: ") + e.what());
        }

        const auto deadline = std::chrono::steady_clock::now() + options.startup_timeout;
        auto ready = read_frame(deadline);
        if (!ready || ready->value("status", "") != "ready") {
            proc.kill();
            throw Error(ErrorCode::RuntimeUnavailable,
                        "the sandbox interpreter did not start: " + tail_of_file(kernel_log));
        }
        next_cell_id = 1;
        handle.alive = true;
    }

    void stop()
    {
        proc.kill();
        if (options.runtime == RuntimeKind::Docker && !handle.container_id.empty()) {
            detail::run_command({options.docker_binary, "rm", "-f", handle.container_id}, std::chrono::seconds(15));
        }
    }

    /// nullopt on EOF; throws on timeout only via the `timed_out` flag.
    std::optional<nlohmann::json> read_frame(std::chrono::steady_clock::time_point deadline,
                                             bool* timed_out = nullptr)
    {
        std::string buf;
        auto st = proc.read_exact(buf, frame::kHeaderSize, deadline);
        if (st == Subprocess::ReadStatus::Ok) {
            const auto n = frame::decode_length(buf);
            // The body follows the header immediately; allow a short grace.
            st = proc.read_exact(buf, n, std::max(deadline, std::chrono::steady_clock::now() + std::chrono::seconds(5)));
        }
        if (st == Subprocess::ReadStatus::Timeout && timed_out != nullptr) {
            *timed_out = true;
        }
        if (st != Subprocess::ReadStatus::Ok) {
            return std::nullopt;
        }
        std::size_t consumed = 0;
        return frame::decode(buf, consumed);
    }

    /// Restarts the interpreter after a crash or timeout; throws SandboxDead
    /// when that fails.
    void restart()
    {
        stop();
        handle.alive = false;
        try {
            start();
        } catch (const Error& e) {
            throw Error(ErrorCode::SandboxDead, std::string("sandbox could not be restarted: ") + e.detail());
        }
    }

    ExecutionResult execute(std::string_view source, std::chrono::milliseconds timeout)
    {
        if (!handle.alive) {
            throw Error(ErrorCode::SandboxDead, "sandbox for session " + handle.session_id + " is closed");
        }
        const auto before = index_files(handle.assets_mount);
        ExecutionResult result;
        const auto started_ms = clock->now_ms();

        std::string preamble;
        const auto id = next_cell_id++;
        if (!proc.write_all(frame::encode_request(id, source))) {
            restart();
            preamble = "[sandbox] the interpreter had exited and was restarted; earlier variables were lost.\n";
            next_cell_id = id + 1;
            if (!proc.write_all(frame::encode_request(id, source))) {
                handle.alive = false;
                throw Error(ErrorCode::SandboxDead, "interpreter does not accept input");
            }
        }

        bool timed_out = false;
        auto reply = read_frame(std::chrono::steady_clock::now() + timeout, &timed_out);
        if (timed_out) {
            restart();
            result.status = ExecStatus::Timeout;
            result.stderr_text = preamble + timeout_message(timeout);
        } else if (!reply) {
            const auto code = proc.poll_exit();
            restart();
            result.status = ExecStatus::Error;
            result.stderr_text = preamble + "The interpreter exited" +
                                 (code ? " with status " + std::to_string(*code) : std::string{}) +
                                 " while running this cell. It was restarted and all session variables were lost.\n";
        } else {
            if (reply->value("id", std::int64_t{-1}) != id) {
                handle.alive = false;
                proc.kill();
                throw Error(ErrorCode::SandboxDead, "interpreter answered out of order");
            }
            result.status = reply->value("status", "error") == "success" ? ExecStatus::Success : ExecStatus::Error;
            result.stdout_text = utf8::sanitize(reply->value("stdout", ""));
            result.stderr_text = preamble + utf8::sanitize(reply->value("stderr", ""));
        }

        result.artifacts_written = changed_files(before, index_files(handle.assets_mount));
        result.duration_ms = std::max<std::int64_t>(0, clock->now_ms() - started_ms);
        return result;
    }
};

Sandbox::Sandbox(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Sandbox::~Sandbox()
{
    close();
}

std::unique_ptr<Sandbox> Sandbox::open(const std::string& session_id, const std::string& data_location,
                                       const RunConfig& config, const SandboxOptions& options,
                                       const fs::path& assets_mount, Clock& clock)
{
    const auto data = local_data_path(data_location);
    if (!data.empty() && !fs::exists(data)) {
        throw Error(ErrorCode::DataPathMissing, "data location does not exist: '" + data.string() + "'");
    }
    probe_runtime(options);

    auto impl = std::make_unique<Impl>();
    impl->options = options;
    impl->network_enabled = config.network_enabled;
    impl->clock = &clock;

    const auto work_root = options.work_root.empty() ? fs::temp_directory_path() / "dsagent-sandboxes"
                                                     : fs::absolute(options.work_root);
    impl->session_dir = work_root / session_id;
    // The chroot target must be reachable from inside the user namespace, so
    // it lives in the temp directory rather than next to the workspace.
    impl->jail_root = fs::temp_directory_path() / ("dsagent-jail-" + session_id + "-" + std::to_string(::getpid()));
    impl->kernel_log = impl->session_dir / "kernel.log";

    std::error_code ec;
    fs::create_directories(impl->session_dir / "workspace", ec);
    fs::create_directories(impl->jail_root, ec);
    fs::create_directories(assets_mount, ec);
    if (ec) {
        throw Error(ErrorCode::RuntimeUnavailable, "cannot prepare sandbox directories: " + ec.message());
    }

    impl->handle.session_id = session_id;
    impl->handle.workspace_mount = fs::canonical(impl->session_dir / "workspace");
    impl->handle.assets_mount = fs::canonical(assets_mount);
    impl->handle.data_mount = data.empty() ? fs::path{} : fs::canonical(data);
    if (!data.empty()) {
        impl->data_target = fs::is_directory(data) ? "/data" : "/data/" + data.filename().string();
    }

    impl->start();
    return std::unique_ptr<Sandbox>(new Sandbox(std::move(impl)));
}

ExecutionResult Sandbox::execute_cell(std::string_view source, std::chrono::milliseconds timeout)
{
    std::lock_guard lock(mutex_);
    return impl_->execute(source, timeout);
}

void Sandbox::reset()
{
    std::lock_guard lock(mutex_);
    if (!impl_->handle.alive) {
        throw Error(ErrorCode::SandboxDead, "sandbox is closed");
    }
    impl_->restart();
}

void Sandbox::close()
{
    std::lock_guard lock(mutex_);
    if (!impl_ || !impl_->handle.alive) {
        return;
    }
    impl_->stop();
    impl_->handle.alive = false;
    std::error_code ec;
    fs::remove_all(impl_->jail_root, ec);
}

std::string Sandbox::snapshot_state_digest() const
{
    std::lock_guard lock(mutex_);
    if (!impl_->handle.alive) {
        throw Error(ErrorCode::SandboxDead, "sandbox is closed");
    }
    std::ostringstream os;
    for (const auto& [label, root] : {std::pair{"workspace", impl_->handle.workspace_mount},
                                      std::pair{"assets", impl_->handle.assets_mount}}) {
        for (const auto& [path, stamp] : index_files(root)) {
            os << label << '/' << path << ' ' << stamp.second << '\n';
        }
    }
    return os.str();
}

SandboxHandle Sandbox::handle() const
{
    std::lock_guard lock(mutex_);
    return impl_->handle;
}

} // namespace dsagent
