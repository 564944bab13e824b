// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace dsagent::utf8 {

/// Number of Unicode scalar values in well-formed UTF-8 (counts lead bytes).
std::size_t length(std::string_view s) noexcept;

/// The last `n` scalar values of `s` (all of `s` when shorter).
std::string_view suffix(std::string_view s, std::size_t n) noexcept;

/// Replaces ill-formed sequences with U+FFFD.
std::string sanitize(std::string_view s);

} // namespace dsagent::utf8
