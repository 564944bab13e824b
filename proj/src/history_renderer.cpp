// SPDX-License-Identifier: Apache-2.0
#include "dsagent/history_renderer.hpp"

#include "dsagent/utf8.hpp"

#include <algorithm>
#include <vector>

namespace dsagent {

namespace {

std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

void append_with_newline(std::string& out, std::string_view text)
{
    out += text;
    if (text.empty() || text.back() != '\n') {
        out += '\n';
    }
}

void append_head(std::string& out, std::string_view text, std::size_t n)
{
    const auto lines = split_lines(text);
    const auto keep = std::min(n, lines.size());
    for (std::size_t i = 0; i < keep; ++i) {
        out += lines[i];
        out += '\n';
    }
    if (lines.size() > keep) {
        out += "[... " + std::to_string(lines.size() - keep) + " more lines]\n";
    }
}

void append_tail(std::string& out, std::string_view text, std::size_t n)
{
    const auto lines = split_lines(text);
    const auto keep = std::min(n, lines.size());
    if (lines.size() > keep) {
        out += "[... " + std::to_string(lines.size() - keep) + " earlier lines]\n";
    }
    for (std::size_t i = lines.size() - keep; i < lines.size(); ++i) {
        out += lines[i];
        out += '\n';
    }
}

void append_field(std::string& out, std::string_view label, std::string_view value)
{
    if (value.empty()) {
        return;
    }
    out += label;
    out += ": ";
    append_with_newline(out, value);
}

void append_spec(std::string& out, const ProjectSpec& spec)
{
    out += history_format::kHeader;
    if (!spec.general_instructions.empty()) {
        out += '\n';
        out += history_format::kGeneralHeading;
        for (const auto& [key, value] : spec.general_instructions) {
            out += "- ";
            out += key;
            out += ": ";
            append_with_newline(out, value);
        }
    }
    out += '\n';
    out += history_format::kTaskHeading;
    append_field(out, "Task description", spec.task_description);
    append_field(out, "Data description", spec.data_description);
    append_field(out, "Data location", spec.data_location);
    append_field(out, "Metrics", spec.metrics);
    append_field(out, "Inputs", spec.inputs);
    append_field(out, "Outputs", spec.outputs);
    append_field(out, "Special instructions", spec.special_instructions);
}

} // namespace

RenderOptions RenderOptions::from(const RunConfig& config)
{
    return RenderOptions{static_cast<std::size_t>(config.history_char_limit),
                         static_cast<std::size_t>(config.head_tail_lines)};
}

std::string render_untruncated(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts)
{
    std::string out;
    append_spec(out, spec);

    int latest_code = 0;
    for (const auto& c : cells) {
        if (c.kind == CellKind::Code) {
            latest_code = std::max(latest_code, c.ordinal);
        }
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        const bool is_last = i + 1 == cells.size();
        switch (c.kind) {
        case CellKind::Text:
            out += "\nText #" + std::to_string(c.ordinal) + ":\n";
            append_with_newline(out, c.source);
            break;
        case CellKind::Finish:
            out += '\n';
            out += history_format::kFinish;
            append_with_newline(out, c.source);
            break;
        case CellKind::Code: {
            const auto* result = c.final_result();
            if (c.failed() && c.ordinal != latest_code) {
                break; // superseded failure
            }
            out += "\nCode #" + std::to_string(c.ordinal) + ":\n";
            append_with_newline(out, c.source);
            if (result == nullptr) {
                break;
            }
            if (result->status == ExecStatus::Success) {
                if (!result->stdout_text.empty()) {
                    out += history_format::kOutputHead;
                    append_head(out, result->stdout_text, opts.head_tail_lines);
                }
            } else if (is_last) {
                out += history_format::kErrorTail;
                append_tail(out, result->stderr_text, opts.head_tail_lines);
            }
            break;
        }
        }
    }
    return out;
}

std::string render_history(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts)
{
    auto full = render_untruncated(spec, cells, opts);
    if (utf8::length(full) <= opts.char_limit) {
        return full;
    }
    return std::string(utf8::suffix(full, opts.char_limit));
}

std::string render_history(const Session& session, const RenderOptions& opts)
{
    return render_history(session.spec(), session.cells(), opts);
}

std::string render_history(const Session& session)
{
    return render_history(session, RenderOptions::from(session.config()));
}

RenderSize render_size_report(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts)
{
    const auto full = render_untruncated(spec, cells, opts);
    RenderSize size;
    size.untruncated_chars = utf8::length(full);
    size.truncated = size.untruncated_chars > opts.char_limit;
    size.emitted_chars = std::min(size.untruncated_chars, opts.char_limit);
    return size;
}

RenderSize render_size_report(const Session& session, const RenderOptions& opts)
{
    return render_size_report(session.spec(), session.cells(), opts);
}

} // namespace dsagent
