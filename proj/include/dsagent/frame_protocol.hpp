// SPDX-License-Identifier: Apache-2.0
//
// Interpreter wire protocol: every frame is a 4-byte big-endian length
// followed by that many bytes of UTF-8 JSON.
//   host -> interpreter: {"id": <int>, "source": <string>}
//   interpreter -> host: {"id": <int>, "status": "ready"|"success"|"error",
//                         "stdout": <string>, "stderr": <string>}
#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dsagent::frame {

inline constexpr std::size_t kHeaderSize = 4;
/// Frames above this size are rejected as corrupt.
inline constexpr std::uint32_t kMaxFrameSize = 256u * 1024u * 1024u;

std::string encode(const nlohmann::json& body);
std::string encode_request(std::int64_t id, std::string_view source);

/// Body length announced by a 4-byte header.
std::uint32_t decode_length(std::string_view header);

/// Decodes one complete frame from the front of `buffer`; returns nullopt if
/// the buffer does not yet hold a whole frame. `consumed` receives the frame
/// size on success.
std::optional<nlohmann::json> decode(std::string_view buffer, std::size_t& consumed);

} // namespace dsagent::frame
