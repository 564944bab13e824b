// SPDX-License-Identifier: Apache-2.0
#include "dsagent/assets_io.hpp"

#include "dsagent/codec.hpp"
#include "dsagent/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <set>

namespace dsagent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what)
{
    throw Error(ErrorCode::IoError, what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all_fd(int fd, std::string_view content, const fs::path& path)
{
    while (!content.empty()) {
        const auto n = ::write(fd, content.data(), content.size());
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            ::close(fd);
            io_fail(path, "cannot write");
        }
        content.remove_prefix(static_cast<std::size_t>(n));
    }
}

void append_record(const fs::path& path, std::string_view record)
{
    // O_APPEND plus one write keeps concurrent readers from seeing a torn
    // record for any size the kernel writes in one go.
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) {
        io_fail(path, "cannot open");
    }
    write_all_fd(fd, record, path);
    ::close(fd);
}

void replace_file(const fs::path& path, std::string_view content)
{
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) {
        io_fail(tmp, "cannot open");
    }
    write_all_fd(fd, content, tmp);
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "cannot rename into " + path.string());
    }
}

std::string iso_utc(std::int64_t ms)
{
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

void ensure_layout(const fs::path& root)
{
    fs::create_directories(root / "plots");
    fs::create_directories(root / "runs");
}

// --- run-file decoding helpers ---------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& message)
{
    throw SchemaError(path, message);
}

const json& field(const json& j, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        fail(std::string("/") + key, "required field is missing");
    }
    return *it;
}

// --- exports ---------------------------------------------------------------

std::string fence_for(std::string_view content)
{
    std::size_t longest = 0;
    std::size_t run = 0;
    for (const char c : content) {
        run = c == '`' ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

void append_fenced(std::string& out, std::string_view info, std::string_view content)
{
    const auto fence = fence_for(content);
    out += fence;
    out += info;
    out += '\n';
    out += content;
    if (!content.empty() && content.back() != '\n') {
        out += '\n';
    }
    out += fence;
    out += "\n\n";
}

bool is_image(std::string_view path)
{
    std::string lower(path);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (std::string_view ext : {".png", ".jpg", ".jpeg", ".gif", ".svg", ".webp"}) {
        if (lower.ends_with(ext)) {
            return true;
        }
    }
    return false;
}

void append_spec_markdown(std::string& out, const ProjectSpec& spec)
{
    out += "# Solution\n\n";
    if (!spec.general_instructions.empty()) {
        out += "## General instructions\n\n";
        for (const auto& [key, value] : spec.general_instructions) {
            out += "- " + key + ": " + value + "\n";
        }
        out += "\n";
    }
    out += "## Task-specific instructions\n\n";
    const std::pair<const char*, const std::string*> fields[] = {
        {"Task description", &spec.task_description}, {"Data description", &spec.data_description},
        {"Data location", &spec.data_location},       {"Metrics", &spec.metrics},
        {"Inputs", &spec.inputs},                     {"Outputs", &spec.outputs},
        {"Special instructions", &spec.special_instructions},
    };
    for (const auto& [label, value] : fields) {
        if (!value->empty()) {
            out += std::string("**") + label + ":** " + *value;
            out += value->back() == '\n' ? "\n" : "\n\n";
        }
    }
}

/// Notebook multiline string: lines keep their trailing newline.
json nb_lines(std::string_view text)
{
    json lines = json::array();
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        const auto end = nl == std::string_view::npos ? text.size() : nl + 1;
        lines.push_back(std::string(text.substr(start, end - start)));
        start = end;
    }
    return lines;
}

json nb_stream(const char* name, std::string_view text)
{
    return {{"output_type", "stream"}, {"name", name}, {"text", nb_lines(text)}};
}

} // namespace

std::string_view asset_filename(AssetKind kind) noexcept
{
    switch (kind) {
    case AssetKind::Spec: return "spec.json";
    case AssetKind::Metrics: return "metrics.ndjson";
    case AssetKind::ModelCard: return "model_card.md";
    case AssetKind::DebugLog: return "debug.log";
    }
    return "";
}

AssetsDir AssetsDir::create(const fs::path& root)
{
    try {
        if (fs::exists(root)) {
            if (!fs::is_directory(root)) {
                throw Error(ErrorCode::IoError, root.string() + " exists and is not a directory");
            }
            ensure_layout(root);
            return AssetsDir(fs::absolute(root));
        }
        if (root.has_parent_path()) {
            fs::create_directories(root.parent_path());
        }
        std::random_device rd;
        auto staging = root;
        staging += ".staging-" + std::to_string(rd());
        ensure_layout(staging);
        std::error_code ec;
        fs::rename(staging, root, ec);
        if (ec) {
            fs::remove_all(staging);
            if (!fs::is_directory(root)) {
                throw Error(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());
            }
            // Lost a race with another creator; its layout is complete.
        }
        return AssetsDir(fs::absolute(root));
    } catch (const fs::filesystem_error& e) {
        throw Error(ErrorCode::IoError, e.what());
    }
}

std::string AssetsDir::write_asset(AssetKind kind, std::string_view content)
{
    const std::string name(asset_filename(kind));
    const auto path = root_ / name;
    switch (kind) {
    case AssetKind::Metrics:
    case AssetKind::DebugLog: append_record(path, content); break;
    case AssetKind::Spec:
    case AssetKind::ModelCard: replace_file(path, content); break;
    }
    return name;
}

std::string AssetsDir::append_metric(const std::string& name, double value, int step, std::int64_t timestamp_ms)
{
    const json record = {{"name", name}, {"value", value}, {"step", step}, {"timestamp", iso_utc(timestamp_ms)}};
    return write_asset(AssetKind::Metrics, record.dump() + "\n");
}

std::string AssetsDir::log_debug(Clock& clock, std::string_view message)
{
    auto now = clock.now_ms();
    if (now <= last_log_ms_) {
        now = last_log_ms_ + 1;
    }
    last_log_ms_ = now;
    std::string line = iso_utc(now);
    line += ' ';
    for (const char c : message) {
        line += c == '\n' ? ' ' : c;
    }
    line += '\n';
    return write_asset(AssetKind::DebugLog, line);
}

std::string AssetsDir::write_file(const std::string& relative, std::string_view content)
{
    const auto path = resolve(relative);
    if (!path) {
        throw Error(ErrorCode::IoError, "refusing to write outside the assets directory: " + relative);
    }
    std::error_code ec;
    fs::create_directories(path->parent_path(), ec);
    replace_file(*path, content);
    return relative;
}

std::optional<fs::path> AssetsDir::resolve(std::string_view relative) const
{
    if (relative.empty() || relative.front() == '/') {
        return std::nullopt;
    }
    const fs::path rel{std::string(relative)};
    for (const auto& part : rel) {
        if (part == ".." || part.string().find('\0') != std::string::npos) {
            return std::nullopt;
        }
    }
    const auto candidate = (root_ / rel).lexically_normal();
    std::error_code ec;
    // Symlinks inside the workspace could point anywhere; check the target.
    const auto real = fs::weakly_canonical(candidate, ec);
    const auto real_root = fs::weakly_canonical(root_, ec);
    if (ec) {
        return std::nullopt;
    }
    const auto check = real.lexically_relative(real_root);
    if (check.empty() || *check.begin() == "..") {
        return std::nullopt;
    }
    return candidate;
}

std::vector<AssetEntry> AssetsDir::list() const
{
    std::vector<AssetEntry> out;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(root_, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (it->is_regular_file(ec)) {
            out.push_back({it->path().lexically_relative(root_).generic_string(), it->file_size(ec)});
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    return out;
}

// --- run files ---------------------------------------------------------------

json run_to_json(const Session& session)
{
    json cells = json::array();
    for (const auto& c : session.cells()) {
        cells.push_back(codec::to_json(c));
    }
    json trace = json::array();
    for (const auto& t : session.trace()) {
        trace.push_back(codec::to_json(t));
    }
    return {
        {"format_version", kRunFormatVersion},
        {"session_id", session.id()},
        {"spec", codec::to_json(session.spec())},
        {"config", codec::to_json(session.config())},
        {"cells", cells},
        {"status", to_string(session.status())},
        {"step_count", session.step_count()},
        {"trace", trace},
    };
}

std::string save_run(const Session& session)
{
    return run_to_json(session).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

Session run_from_json(const json& j)
{
    if (!j.is_object()) {
        fail("", "run file must be a JSON object");
    }
    static const std::set<std::string> known = {"format_version", "session_id", "spec",       "config",
                                                "cells",          "status",     "step_count", "trace"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            fail("/" + key, "unexpected field");
        }
    }
    const auto& version = field(j, "format_version");
    if (!version.is_number_integer()) {
        fail("/format_version", "expected an integer");
    }
    if (version.get<std::int64_t>() != kRunFormatVersion) {
        throw Error(ErrorCode::VersionUnknown, "run file format_version " + std::to_string(version.get<std::int64_t>()) +
                                                   " is not supported (this build reads version " +
                                                   std::to_string(kRunFormatVersion) + ")");
    }

    Session::State state;
    const auto& sid = field(j, "session_id");
    if (!sid.is_string()) {
        fail("/session_id", "expected a string");
    }
    state.session_id = sid.get<std::string>();
    state.spec = codec::spec_from_json(field(j, "spec"), "/spec");
    state.config = codec::config_from_json(field(j, "config"), "/config");

    const auto& cells = field(j, "cells");
    if (!cells.is_array()) {
        fail("/cells", "expected an array");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        state.cells.push_back(codec::cell_from_json(cells[i], "/cells/" + std::to_string(i)));
    }

    const auto& status = field(j, "status");
    const auto parsed = status.is_string() ? parse_session_status(status.get<std::string>()) : std::nullopt;
    if (!parsed) {
        fail("/status", "expected one of idle, running, awaiting_next_step, finished, stopped_max_steps, failed");
    }
    state.status = *parsed == SessionStatus::Running ? SessionStatus::AwaitingNextStep : *parsed;

    const auto& steps = field(j, "step_count");
    if (!steps.is_number_integer() || steps.get<std::int64_t>() < 0 ||
        steps.get<std::int64_t>() > std::numeric_limits<int>::max()) {
        fail("/step_count", "expected a non-negative integer");
    }
    state.step_count = steps.get<int>();

    const auto& trace = field(j, "trace");
    if (!trace.is_array()) {
        fail("/trace", "expected an array");
    }
    for (std::size_t i = 0; i < trace.size(); ++i) {
        state.trace.push_back(codec::trace_from_json(trace[i], "/trace/" + std::to_string(i)));
    }
    return Session::restore(std::move(state));
}

Session load_run(std::string_view bytes)
{
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::parse_error& e) {
        fail("", std::string("not valid JSON: ") + e.what());
    }
    return run_from_json(j);
}

void note_resume(Session& session, std::int64_t now_ms, bool replay)
{
    session.add_trace(now_ms, "resumed",
                      {{"notice", kResumeNotice}, {"replay", replay}, {"cells", session.cells().size()}});
}

// --- exports -----------------------------------------------------------------

std::string export_markdown(const Session& session, std::string_view asset_prefix)
{
    std::string out;
    append_spec_markdown(out, session.spec());
    for (const auto& cell : session.cells()) {
        switch (cell.kind) {
        case CellKind::Text:
            out += "---\n\n";
            out += cell.source;
            out += cell.source.ends_with('\n') ? "\n" : "\n\n";
            break;
        case CellKind::Code: {
            out += "---\n\n";
            append_fenced(out, "python", cell.source);
            const auto* result = cell.final_result();
            if (result == nullptr) {
                break;
            }
            const auto& shown = result->status == ExecStatus::Success ? result->stdout_text : result->stderr_text;
            if (!shown.empty()) {
                append_fenced(out, "text", shown);
            }
            for (const auto& artifact : result->artifacts_written) {
                const auto target = std::string(asset_prefix) + artifact;
                out += is_image(artifact) ? "![" + artifact + "](" + target + ")\n\n"
                                          : "[" + artifact + "](" + target + ")\n\n";
            }
            break;
        }
        case CellKind::Finish:
            out += "## Finish\n\n";
            out += cell.source;
            out += cell.source.ends_with('\n') ? "" : "\n";
            break;
        }
    }
    return out;
}

json notebook_json(const Session& session)
{
    json cells = json::array();
    for (const auto& cell : session.cells()) {
        const auto id = "cell-" + std::to_string(cell.id);
        if (cell.kind != CellKind::Code) {
            cells.push_back({{"cell_type", "markdown"},
                             {"id", id},
                             {"metadata", json::object()},
                             {"source", nb_lines(cell.source)}});
            continue;
        }
        json outputs = json::array();
        if (const auto* r = cell.final_result()) {
            if (!r->stdout_text.empty()) {
                outputs.push_back(nb_stream("stdout", r->stdout_text));
            }
            if (r->status != ExecStatus::Success && !r->stderr_text.empty()) {
                outputs.push_back(nb_stream("stderr", r->stderr_text));
            }
        }
        cells.push_back({{"cell_type", "code"},
                         {"id", id},
                         {"execution_count", cell.ordinal},
                         {"metadata", json::object()},
                         {"outputs", outputs},
                         {"source", nb_lines(cell.source)}});
    }
    return {
        {"cells", cells},
        {"metadata",
         {{"kernelspec", {{"display_name", "Python 3"}, {"language", "python"}, {"name", "python3"}}},
          {"language_info", {{"name", "python"}}}}},
        {"nbformat", 4},
        {"nbformat_minor", 5},
    };
}

std::string export_notebook(const Session& session)
{
    return notebook_json(session).dump(1, ' ', false, json::error_handler_t::replace) + "\n";
}

ExportPaths write_exports(AssetsDir& dir, const Session& session)
{
    dir.write_asset(AssetKind::Spec, codec::to_json(session.spec()).dump(2) + "\n");
    ExportPaths paths;
    paths.run_file = dir.write_file("runs/run.json", save_run(session));
    paths.markdown = dir.write_file("runs/solution.md", export_markdown(session, "../"));
    paths.notebook = dir.write_file("runs/solution.ipynb", export_notebook(session));
    return paths;
}

} // namespace dsagent
