// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

namespace dsagent::detail {

/// Parses YAML (and therefore JSON) text into JSON. Quoted scalars stay
/// strings; plain scalars become null, booleans or numbers when they look
/// like one. Mapping order is kept (ordered_json). Throws InvalidConfig.
nlohmann::ordered_json parse_yaml(const std::string& text, const std::string& what);

std::string read_text_file(const std::filesystem::path& path);

} // namespace dsagent::detail
