// SPDX-License-Identifier: Apache-2.0
#include "dsagent/frame_protocol.hpp"
#include "dsagent/error.hpp"

#include <doctest.h>

using namespace dsagent;
using nlohmann::json;

TEST_CASE("header is big-endian length")
{
    const auto bytes = frame::encode_request(7, "print('hi')");
    const std::string payload = R"J({"id":7,"source":"print('hi')"})J";
    REQUIRE(bytes.size() == 4 + payload.size());
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 0);
    CHECK(bytes[2] == 0);
    CHECK(static_cast<unsigned char>(bytes[3]) == payload.size());
    CHECK(bytes.substr(4) == payload);
    CHECK(frame::decode_length(std::string("\x00\x01\x02\x03", 4)) == 0x010203u);
}

TEST_CASE("decode waits for whole frames")
{
    const json a = {{"id", 1}, {"status", "ready"}};
    const json b = {{"id", 2}, {"status", "success"}, {"stdout", std::string(300, 'x')}};
    const auto stream = frame::encode(a) + frame::encode(b);
    std::size_t consumed = 0;
    CHECK_FALSE(frame::decode(stream.substr(0, 3), consumed).has_value());
    CHECK_FALSE(frame::decode(stream.substr(0, 10), consumed).has_value());
    auto first = frame::decode(stream, consumed);
    REQUIRE(first.has_value());
    CHECK(*first == a);
    auto second = frame::decode(std::string_view(stream).substr(consumed), consumed);
    REQUIRE(second.has_value());
    CHECK(*second == b);
}

TEST_CASE("corrupt frames")
{
    std::size_t consumed = 0;
    const std::string huge("\xFF\xFF\xFF\xFF", 4);
    CHECK_THROWS_AS(frame::decode(huge, consumed), Error);
    const std::string bad = std::string("\x00\x00\x00\x03", 4) + "{x]";
    CHECK_THROWS_AS(frame::decode(bad, consumed), Error);
    CHECK_THROWS_AS(frame::decode_length("ab"), Error);
}

TEST_CASE("invalid UTF-8 in output is replaced, not fatal")
{
    const auto bytes = frame::encode({{"stdout", std::string("a\xFF")}});
    std::size_t consumed = 0;
    const auto decoded = frame::decode(bytes, consumed);
    REQUIRE(decoded.has_value());
    CHECK((*decoded)["stdout"] == "a\xEF\xBF\xBD");
}
