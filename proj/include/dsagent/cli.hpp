// SPDX-License-Identifier: Apache-2.0
//
// Headless entry points behind the `dsagent` executable.
#pragma once

#include "dsagent/assets_io.hpp"
#include "dsagent/sandbox.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace dsagent {

namespace exit_code {
inline constexpr int kFinished = 0;
inline constexpr int kStoppedMaxSteps = 1;
inline constexpr int kFailed = 2;
inline constexpr int kConfigError = 3;
} // namespace exit_code

struct CliRunOptions {
    /// Spec file; optional when resuming.
    std::optional<std::filesystem::path> spec_file;
    std::optional<std::filesystem::path> config_file;
    /// RunConfig overrides, flat keys ("max_steps", "code_temperature", ...).
    nlohmann::json overrides = nlohmann::json::object();
    /// Defaults to <assets_root>/<session id>.
    std::optional<std::filesystem::path> assets_dir;
    std::optional<std::string> session_id;
    /// Saved run to continue.
    std::optional<std::filesystem::path> resume;
    bool replay = false;
    bool skip_diagnostics = false;
    /// Deterministic timestamps starting here (ManualClock, 1 ms per read).
    std::optional<std::int64_t> fixed_clock;
    std::optional<RuntimeKind> runtime;
    std::optional<std::string> image;
    /// Test seam; defaults to the configured sandbox.
    std::function<std::unique_ptr<CellExecutor>(const Session&, const AssetsDir&)> make_executor;
};

/// Creates (or resumes) a session, autoruns it and writes every export into
/// the assets directory. Returns an exit_code value.
int cli_run(const CliRunOptions& options, std::ostream& out, std::ostream& err);

/// Prints the diagnostics report; returns 0 when every probe passes, else 3.
int cli_diagnose(const std::optional<std::filesystem::path>& config_file, bool as_json, std::ostream& out,
                 std::ostream& err);

/// Converts a run file to json (canonical), md or ipynb.
int cli_export(const std::filesystem::path& run_file, const std::string& format,
               const std::optional<std::filesystem::path>& output, std::ostream& out, std::ostream& err);

} // namespace dsagent
