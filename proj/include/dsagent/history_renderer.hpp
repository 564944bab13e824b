// SPDX-License-Identifier: Apache-2.0
//
// Budget-bounded textual projection of a session, shared by every agent.
//
// Layout (see docs/history-format.md):
//   1. the project description as labeled fields,
//   2. every Text cell as "Text #n:" plus its full source,
//   3. every successful Code cell as "Code #n:" plus its source and the
//      first `head_tail_lines` lines of stdout under "Output (head):",
//   4. the latest Code cell, when it failed, as source only, plus the last
//      `head_tail_lines` lines of its stderr under "Error (tail):" when it
//      is the last cell of the session; older failed Code cells are omitted,
//   5. the result cut down to its final `char_limit` Unicode scalar values.
#pragma once

#include "dsagent/domain.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace dsagent {

namespace history_format {
inline constexpr std::string_view kHeader = "# Project summary\n";
inline constexpr std::string_view kGeneralHeading = "## General instructions\n";
inline constexpr std::string_view kTaskHeading = "## Task-specific instructions\n";
inline constexpr std::string_view kOutputHead = "Output (head):\n";
inline constexpr std::string_view kErrorTail = "Error (tail):\n";
inline constexpr std::string_view kFinish = "Finish:\n";
} // namespace history_format

struct RenderOptions {
    std::size_t char_limit = 10000;
    std::size_t head_tail_lines = 20;

    static RenderOptions from(const RunConfig& config);
};

struct RenderSize {
    std::size_t untruncated_chars = 0;
    std::size_t emitted_chars = 0;
    bool truncated = false;

    bool operator==(const RenderSize&) const = default;
};

/// Everything before the final cut.
std::string render_untruncated(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts);

std::string render_history(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts);
std::string render_history(const Session& session, const RenderOptions& opts);
std::string render_history(const Session& session);

RenderSize render_size_report(const ProjectSpec& spec, std::span<const Cell> cells, const RenderOptions& opts);
RenderSize render_size_report(const Session& session, const RenderOptions& opts);

} // namespace dsagent
