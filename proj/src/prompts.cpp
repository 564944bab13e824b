// SPDX-License-Identifier: Apache-2.0
#include "dsagent/prompts.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef DSAGENT_PROMPTS_DIR
#define DSAGENT_PROMPTS_DIR "prompts"
#endif

namespace dsagent {

namespace {

std::string read_prompt(const std::filesystem::path& dir, const std::string& name, const std::string& version)
{
    const auto path = dir / (name + "." + version + ".md");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read prompt file '" + path.string() + "'");
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

PromptSet PromptSet::load(const std::filesystem::path& dir, const std::string& version)
{
    PromptSet p;
    p.version = version;
    p.orchestrator = read_prompt(dir, "orchestrator", version);
    p.orchestrator_emulation = read_prompt(dir, "orchestrator_emulation", version);
    p.text_agent = read_prompt(dir, "text_agent", version);
    p.code_agent = read_prompt(dir, "code_agent", version);
    return p;
}

std::string PromptSet::system_prompt(AgentRole role, ToolMode mode) const
{
    switch (role) {
    case AgentRole::Orchestrator:
        return mode == ToolMode::EmulatedJson ? orchestrator + "\n" + orchestrator_emulation : orchestrator;
    case AgentRole::TextAgent: return text_agent;
    case AgentRole::CodeAgent: break;
    }
    return code_agent;
}

std::filesystem::path default_prompts_dir()
{
    if (const char* env = std::getenv("DSAGENT_PROMPTS_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return DSAGENT_PROMPTS_DIR;
}

} // namespace dsagent
