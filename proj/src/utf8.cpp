// SPDX-License-Identifier: Apache-2.0
#include "dsagent/utf8.hpp"

namespace dsagent::utf8 {

namespace {

constexpr bool is_continuation(unsigned char c) noexcept { return (c & 0xC0) == 0x80; }

// Length of the well-formed sequence starting at s[i], or 0.
std::size_t sequence_length(std::string_view s, std::size_t i) noexcept
{
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    unsigned char lo = 0x80;
    unsigned char hi = 0xBF;
    if (b0 < 0x80) {
        return 1;
    } else if (b0 >= 0xC2 && b0 <= 0xDF) {
        n = 2;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
        n = 3;
        if (b0 == 0xE0) {
            lo = 0xA0;
        } else if (b0 == 0xED) {
            hi = 0x9F;
        }
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
        n = 4;
        if (b0 == 0xF0) {
            lo = 0x90;
        } else if (b0 == 0xF4) {
            hi = 0x8F;
        }
    } else {
        return 0;
    }
    if (i + n > s.size()) {
        return 0;
    }
    const auto b1 = static_cast<unsigned char>(s[i + 1]);
    if (b1 < lo || b1 > hi) {
        return 0;
    }
    for (std::size_t k = 2; k < n; ++k) {
        if (!is_continuation(static_cast<unsigned char>(s[i + k]))) {
            return 0;
        }
    }
    return n;
}

} // namespace

std::size_t length(std::string_view s) noexcept
{
    std::size_t n = 0;
    for (char c : s) {
        n += is_continuation(static_cast<unsigned char>(c)) ? 0 : 1;
    }
    return n;
}

std::string_view suffix(std::string_view s, std::size_t n) noexcept
{
    if (n == 0) {
        return s.substr(s.size());
    }
    std::size_t seen = 0;
    for (std::size_t i = s.size(); i-- > 0;) {
        if (!is_continuation(static_cast<unsigned char>(s[i])) && ++seen == n) {
            return s.substr(i);
        }
    }
    return s;
}

std::string sanitize(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto n = sequence_length(s, i);
        if (n == 0) {
            out += "\xEF\xBF\xBD";
            ++i;
        } else {
            out.append(s.substr(i, n));
            i += n;
        }
    }
    return out;
}

} // namespace dsagent::utf8
