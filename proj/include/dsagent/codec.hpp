// SPDX-License-Identifier: Apache-2.0
//
// JSON encoding of the domain types. Decoders report problems as SchemaError
// carrying a JSON pointer rooted at `path`.
#pragma once

#include "dsagent/domain.hpp"

#include <json.hpp>

#include <string>

namespace dsagent::codec {

nlohmann::json to_json(const ProjectSpec& spec);
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const ExecutionResult& result);
nlohmann::json to_json(const Cell& cell);
nlohmann::json to_json(const TraceRecord& record);

ProjectSpec spec_from_json(const nlohmann::json& j, const std::string& path = "");
/// Strict: every field must be present.
RunConfig config_from_json(const nlohmann::json& j, const std::string& path = "");
/// Lenient: only the given fields change; unknown fields are rejected.
/// Accepts both the nested "agents" form and flat "<role>_model" /
/// "<role>_temperature" keys.
void apply_config_overrides(RunConfig& config, const nlohmann::json& j, const std::string& path = "");
ExecutionResult result_from_json(const nlohmann::json& j, const std::string& path);
Cell cell_from_json(const nlohmann::json& j, const std::string& path);
TraceRecord trace_from_json(const nlohmann::json& j, const std::string& path);

} // namespace dsagent::codec
