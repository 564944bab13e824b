// SPDX-License-Identifier: Apache-2.0
//
// Session-scoped assets directory and every on-disk format:
//   <root>/spec.json        project description (overwritten)
//   <root>/metrics.ndjson   {name, value, step, timestamp} per line (appended)
//   <root>/model_card.md    model card (overwritten)
//   <root>/debug.log        "<ISO-8601 UTC> <message>" per line (appended)
//   <root>/plots/           images written by code cells
//   <root>/runs/            run files and exports
#pragma once

#include "dsagent/clock.hpp"
#include "dsagent/domain.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dsagent {

inline constexpr int kRunFormatVersion = 1;

enum class AssetKind { Spec, Metrics, ModelCard, DebugLog };

std::string_view asset_filename(AssetKind kind) noexcept;

struct AssetEntry {
    std::string path; // relative, '/'-separated
    std::uintmax_t size = 0;
};

class AssetsDir {
public:
    /// Creates the directory with all fixed children. A fresh root is built
    /// under a temporary name and renamed into place, so readers never see a
    /// half-made layout. An existing root is completed, never cleared.
    static AssetsDir create(const std::filesystem::path& root);

    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }
    [[nodiscard]] std::filesystem::path plots_dir() const { return root_ / "plots"; }
    [[nodiscard]] std::filesystem::path runs_dir() const { return root_ / "runs"; }

    /// Writes `content` to the kind's file and returns its relative path.
    /// Metrics and DebugLog append one record per call with a single write;
    /// Spec and ModelCard are replaced atomically. Throws IoError.
    std::string write_asset(AssetKind kind, std::string_view content);

    /// Appends one metrics record.
    std::string append_metric(const std::string& name, double value, int step, std::int64_t timestamp_ms);

    /// Appends one debug line. Timestamps are strictly increasing even when
    /// the clock stalls or steps back.
    std::string log_debug(Clock& clock, std::string_view message);

    /// Writes `content` to `relative` under the root (used for exports).
    std::string write_file(const std::string& relative, std::string_view content);

    /// Maps a relative path to a file under the root. Rejects absolute
    /// paths, ".." components and anything resolving outside the root.
    [[nodiscard]] std::optional<std::filesystem::path> resolve(std::string_view relative) const;

    /// Regular files under the root, sorted by path.
    [[nodiscard]] std::vector<AssetEntry> list() const;

private:
    explicit AssetsDir(std::filesystem::path root) : root_(std::move(root)) {}

    std::filesystem::path root_;
    std::int64_t last_log_ms_ = 0;
};

/// Canonical run-file bytes: sorted keys, two-space indentation, UTF-8,
/// trailing newline. Equal sessions give equal bytes.
std::string save_run(const Session& session);
nlohmann::json run_to_json(const Session& session);

/// Throws VersionUnknown, or SchemaError (SchemaViolation) with a JSON
/// pointer. A session saved while Running comes back AwaitingNextStep.
Session load_run(std::string_view bytes);
Session run_from_json(const nlohmann::json& j);

inline constexpr std::string_view kResumeNotice =
    "Resumed from a saved run. Cell sources and outputs are intact, but the interpreter was restarted: "
    "variables, imports and loaded data from earlier cells no longer exist.";

/// Records the resume banner in the trace. Interpreter state is never
/// serialized, so a resumed session always starts with a fresh interpreter.
void note_resume(Session& session, std::int64_t now_ms, bool replay);

/// `asset_prefix` is prepended to artifact links, e.g. "../" when the
/// document is stored under runs/.
std::string export_markdown(const Session& session, std::string_view asset_prefix = "");

/// Notebook format 4.5 document.
nlohmann::json notebook_json(const Session& session);
std::string export_notebook(const Session& session);

/// Relative export locations under the assets root.
struct ExportPaths {
    std::string run_file;
    std::string markdown;
    std::string notebook;
};

/// Writes spec.json plus run.json, solution.md and solution.ipynb under runs/.
ExportPaths write_exports(AssetsDir& dir, const Session& session);

} // namespace dsagent
