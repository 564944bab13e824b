// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dsagent/domain.hpp"

#include <filesystem>
#include <string>

namespace dsagent {

/// System prompts for the three agents, loaded from versioned files
/// "<name>.<version>.md" in a prompts directory.
struct PromptSet {
    std::string version;
    std::string orchestrator;
    /// Appended to the orchestrator prompt when tool calls are emulated.
    std::string orchestrator_emulation;
    std::string text_agent;
    std::string code_agent;

    /// Throws IoError when a file is missing.
    static PromptSet load(const std::filesystem::path& dir, const std::string& version = "v1");

    [[nodiscard]] std::string system_prompt(AgentRole role, ToolMode mode) const;
};

/// $DSAGENT_PROMPTS_DIR if set, else the directory the project was built from.
std::filesystem::path default_prompts_dir();

} // namespace dsagent
