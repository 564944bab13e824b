// SPDX-License-Identifier: Apache-2.0
#include "dsagent/frame_protocol.hpp"

#include "dsagent/error.hpp"

namespace dsagent::frame {

std::string encode(const nlohmann::json& body)
{
    const auto payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    const auto n = static_cast<std::uint32_t>(payload.size());
    std::string out;
    out.reserve(kHeaderSize + payload.size());
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out += payload;
    return out;
}

std::string encode_request(std::int64_t id, std::string_view source)
{
    return encode({{"id", id}, {"source", std::string(source)}});
}

std::uint32_t decode_length(std::string_view header)
{
    if (header.size() < kHeaderSize) {
        throw Error(ErrorCode::SandboxDead, "truncated frame header");
    }
    std::uint32_t n = 0;
    for (std::size_t i = 0; i < kHeaderSize; ++i) {
        n = (n << 8) | static_cast<unsigned char>(header[i]);
    }
    if (n > kMaxFrameSize) {
        throw Error(ErrorCode::SandboxDead, "frame of " + std::to_string(n) + " bytes exceeds the limit");
    }
    return n;
}

std::optional<nlohmann::json> decode(std::string_view buffer, std::size_t& consumed)
{
    if (buffer.size() < kHeaderSize) {
        return std::nullopt;
    }
    const auto n = decode_length(buffer);
    if (buffer.size() < kHeaderSize + n) {
        return std::nullopt;
    }
    auto body = nlohmann::json::parse(buffer.substr(kHeaderSize, n), nullptr, false);
    if (body.is_discarded()) {
        throw Error(ErrorCode::SandboxDead, "interpreter sent a frame that is not JSON");
    }
    consumed = kHeaderSize + n;
    return body;
}

} // namespace dsagent::frame
