// SPDX-License-Identifier: Apache-2.0
#include "yaml_json.hpp"

#include "dsagent/error.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

namespace dsagent::detail {

namespace {

nlohmann::ordered_json scalar(const YAML::Node& node)
{
    const auto& text = node.Scalar();
    if (node.Tag() == "!") { // quoted
        return text;
    }
    if (text.empty() || text == "~" || text == "null") {
        return nullptr;
    }
    if (text == "true" || text == "True") {
        return true;
    }
    if (text == "false" || text == "False") {
        return false;
    }
    std::int64_t i = 0;
    if (YAML::convert<std::int64_t>::decode(node, i) && text.find_first_of(".eE") == std::string::npos) {
        return i;
    }
    double d = 0;
    if (YAML::convert<double>::decode(node, d) && text.find_first_of("0123456789") != std::string::npos) {
        return d;
    }
    return text;
}

nlohmann::ordered_json convert(const YAML::Node& node)
{
    switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar(node);
    case YAML::NodeType::Sequence: {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& item : node) {
            arr.push_back(convert(item));
        }
        return arr;
    }
    case YAML::NodeType::Map: {
        auto obj = nlohmann::ordered_json::object();
        for (const auto& kv : node) {
            obj[kv.first.as<std::string>()] = convert(kv.second);
        }
        return obj;
    }
    }
    return nullptr;
}

} // namespace

nlohmann::ordered_json parse_yaml(const std::string& text, const std::string& what)
{
    try {
        return convert(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::InvalidConfig, what + ": " + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace dsagent::detail
