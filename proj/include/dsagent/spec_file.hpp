// SPDX-License-Identifier: Apache-2.0
//
// Human-edited project description. YAML (or JSON) with two sections:
//
//   general_instructions:          # free-form, order kept
//     estimated_steps: 10-20
//     plots: at least two
//   task_specific_instructions:
//     task_description: ...        # required
//     data_description: ...
//     data_location: data/train.csv
//     metrics: ...
//     inputs: ...
//     outputs: ...
//     special_instructions: ...
//
// The run-file form (general_instructions as [{key, value}] and the task
// fields at top level) is accepted too. See docs/spec-file.md.
#pragma once

#include "dsagent/domain.hpp"

#include <filesystem>
#include <string>

namespace dsagent {

/// Throws InvalidSpec naming the offending field.
ProjectSpec parse_spec_file(const std::string& text);
ProjectSpec load_spec_file(const std::filesystem::path& path);

/// Host path to mount as data: relative paths are taken relative to
/// `base_dir`; URIs other than file:// give an empty path.
std::filesystem::path resolve_data_path(const std::string& data_location, const std::filesystem::path& base_dir);

} // namespace dsagent
