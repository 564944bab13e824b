// SPDX-License-Identifier: Apache-2.0
//
// The orchestrator's action schema and the parser that turns a model reply
// (native tool call or free text) into a validated OrchestratorAction.
#pragma once

#include "dsagent/domain.hpp"
#include "dsagent/llm_gateway.hpp"

#include <json.hpp>

#include <optional>
#include <string_view>

namespace dsagent {

/// JSON schema of a single action object (used in the emulation prompt and
/// published under docs/).
nlohmann::json action_json_schema();

/// Tool definitions (one function per action) sent in native mode.
nlohmann::json action_tool_definitions();

/// Validates a decoded action object. Accepts the legacy finish form that
/// carries "purpose" instead of "summary_hint".
/// Throws UnknownAction, MissingField, UnexpectedField, InvalidFieldType.
OrchestratorAction validate_action(const nlohmann::json& object);

/// First syntactically valid JSON object embedded in `text` (fenced, inline
/// or bare), or nullopt.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

/// Native mode validates the tool call; when the model answered in text
/// instead, the text is parsed as in emulated mode. Emulated mode extracts
/// the first JSON object from the text. Also throws NoJsonFound.
OrchestratorAction parse_action(const ChatResponse& raw, ToolMode mode);

} // namespace dsagent
