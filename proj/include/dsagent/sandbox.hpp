// SPDX-License-Identifier: Apache-2.0
//
// Stateful, isolated execution of code cells.
//
// Each session gets one sandbox: a persistent interpreter process running
// inside a container (Docker) or a Linux user/mount/pid/net namespace jail,
// with three host directories mapped in:
//   data      -> /data    (read-only; the user's data)
//   workspace -> /work    (read-write; interpreter working directory)
//   assets    -> /assets  (read-write; plots, metrics, model card)
// Cells travel over the interpreter's stdio using the frame protocol in
// frame_protocol.hpp.
#pragma once

#include "dsagent/clock.hpp"
#include "dsagent/domain.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

namespace dsagent {

/// What the orchestrator needs from an executor.
class CellExecutor {
public:
    virtual ~CellExecutor() = default;
    /// `attempt` of the returned result is left at 1; the session numbers
    /// attempts. Throws SandboxDead when the executor cannot run cells.
    virtual ExecutionResult execute_cell(std::string_view source, std::chrono::milliseconds timeout) = 0;
    /// Discards interpreter state (session reset).
    virtual void reset() = 0;
};

enum class RuntimeKind {
    /// unshare(1) user+mount+pid(+net) namespaces with a chroot built from
    /// read-only binds of the image (or the host's /usr, /lib, /etc).
    Namespace,
    /// Docker-compatible CLI.
    Docker,
    /// Plain child process, no isolation. Development only.
    Process,
};

std::string_view to_string(RuntimeKind kind) noexcept;
std::optional<RuntimeKind> parse_runtime_kind(std::string_view s) noexcept;

struct SandboxOptions {
    RuntimeKind runtime = RuntimeKind::Namespace;
    /// Docker: image reference. Namespace: "host" or a rootfs directory.
    std::string image = "host";
    std::string docker_binary = "docker";
    /// Interpreter command inside the sandbox.
    std::string python = "python3";
    std::filesystem::path kernel_path;
    /// Host directory for per-session scratch state (workspace, mount roots).
    std::filesystem::path work_root;
    std::chrono::milliseconds startup_timeout{30000};
};

struct SandboxHandle {
    std::string session_id;
    std::string container_id;
    std::filesystem::path workspace_mount;
    /// Empty when the session has no local data.
    std::filesystem::path data_mount;
    std::filesystem::path assets_mount;
    bool alive = false;
};

/// Probes whether the runtime can start sandboxes at all. Throws
/// RuntimeUnavailable or ImageMissing.
void probe_runtime(const SandboxOptions& options);

class Sandbox final : public CellExecutor {
public:
    /// Starts the interpreter. Throws ImageMissing, RuntimeUnavailable,
    /// DataPathMissing.
    static std::unique_ptr<Sandbox> open(const std::string& session_id, const std::string& data_location,
                                         const RunConfig& config, const SandboxOptions& options,
                                         const std::filesystem::path& assets_mount, Clock& clock);

    ~Sandbox() override;
    Sandbox(const Sandbox&) = delete;
    Sandbox& operator=(const Sandbox&) = delete;

    ExecutionResult execute_cell(std::string_view source, std::chrono::milliseconds timeout) override;
    void reset() override;

    /// Stops and removes the container. Idempotent.
    void close();

    /// Relative paths and byte sizes under the workspace and assets mounts,
    /// one "<mount>/<path> <bytes>" per line, sorted. Never file contents.
    [[nodiscard]] std::string snapshot_state_digest() const;

    [[nodiscard]] SandboxHandle handle() const;

private:
    struct Impl;
    explicit Sandbox(std::unique_ptr<Impl> impl);

    std::unique_ptr<Impl> impl_;
    mutable std::mutex mutex_;
};

/// Maps a data location (path or file:// URI) to a host path; empty for
/// remote URIs and empty locations.
std::filesystem::path local_data_path(std::string_view data_location);

} // namespace dsagent
