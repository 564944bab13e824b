// SPDX-License-Identifier: Apache-2.0
//
// Second, deliberately different implementation of the history rules used to
// cross-check the production renderer. It works on a list of output lines and
// on decoded code points instead of appending bytes.
#pragma once

#include "dsagent/domain.hpp"

#include <string>
#include <vector>

namespace oracle {

std::u32string decode(const std::string& utf8);
std::string encode(const std::u32string& text);

/// Last `n` code points of `text`.
std::string keep_suffix(const std::string& text, std::size_t n);

std::string render(const dsagent::ProjectSpec& spec, const std::vector<dsagent::Cell>& cells,
                   std::size_t char_limit, std::size_t lines);

} // namespace oracle
