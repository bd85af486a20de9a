// src/tsv.hpp

// Copyright 2026 The gcnstd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GCNSTD_SRC_TSV_HPP_
#define GCNSTD_SRC_TSV_HPP_

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "gcnstd/common.hpp"

namespace gcnstd::detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError(fmt::format("bad {} value '{}'", what, text));
  return v;
}

/// Calls fn(line_number, fields) for each non-empty, non-comment row with
/// exactly `columns` fields.
template <class Fn>
void for_each_tsv_row(const std::string& text, std::size_t columns, const std::string& source, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != columns)
      throw FormatError(fmt::format("{}:{}: expected {} columns, got {}", source, lineno, columns,
                                    fields.size()));
    try {
      fn(lineno, fields);
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
}

}  // namespace gcnstd::detail

#endif  // GCNSTD_SRC_TSV_HPP_
