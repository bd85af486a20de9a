// src/grid.cpp

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

#include "gcnstd/grid.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"

namespace gcnstd {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'P', 'G', '1'};

std::vector<GridViolation> vocab_violations(const Vocabulary& vocab) {
  std::vector<GridViolation> out;
  const int n = vocab.size();
  if (n < 2) out.push_back({0, "vocabulary needs a blank and at least one grapheme"});
  std::set<std::string> seen;
  for (const auto& s : vocab.symbols) {
    if (!seen.insert(s).second)
      out.push_back({0, fmt::format("duplicate symbol '{}'", s)});
  }
  if (vocab.blank_index < 0 || vocab.blank_index >= n)
    out.push_back({0, fmt::format("blank_index {} out of range", vocab.blank_index)});
  if (vocab.separator_index) {
    const int sep = *vocab.separator_index;
    if (sep < 0 || sep >= n)
      out.push_back({0, fmt::format("separator_index {} out of range", sep)});
    else if (sep == vocab.blank_index)
      out.push_back({0, "separator_index equals blank_index"});
    else if (n < 3)
      out.push_back({0, "vocabulary with a separator needs at least one grapheme"});
  }
  return out;
}

}  // namespace

int Vocabulary::find(const std::string& symbol) const {
  for (int i = 0; i < size(); ++i)
    if (symbols[i] == symbol) return i;
  return -1;
}

std::vector<std::string> Vocabulary::graphemes() const {
  std::vector<std::string> out;
  for (int i = 0; i < size(); ++i)
    if (i != blank_index) out.push_back(symbols[i]);
  return out;
}

bool PosteriorGrid::operator==(const PosteriorGrid& other) const {
  if (!(vocab == other.vocab)) return false;
  if (std::bit_cast<std::uint64_t>(frame_duration_s) !=
      std::bit_cast<std::uint64_t>(other.frame_duration_s))
    return false;
  if (probs.rows() != other.probs.rows() || probs.cols() != other.probs.cols())
    return false;
  return probs.size() == 0 ||
         std::memcmp(probs.data(), other.probs.data(),
                     sizeof(float) * static_cast<std::size_t>(probs.size())) == 0;
}

std::vector<GridViolation> validate(const PosteriorGrid& grid) {
  auto out = vocab_violations(grid.vocab);
  if (!(std::isfinite(grid.frame_duration_s) && grid.frame_duration_s > 0))
    out.push_back({0, "frame_duration_s must be positive"});
  if (grid.probs.cols() != grid.vocab.size()) {
    out.push_back({0, fmt::format("grid has {} columns but vocabulary has {} symbols",
                                  grid.probs.cols(), grid.vocab.size())});
    return out;
  }
  for (int r = 0; r < grid.num_frames(); ++r) {
    const int t = r + 1;
    double sum = 0.0;
    bool in_range = true;
    for (int s = 0; s < grid.num_symbols(); ++s) {
      const float p = grid.probs(r, s);
      if (!(p >= 0.0f && p <= 1.0f)) in_range = false;
      sum += p;
    }
    if (!in_range) {
      out.push_back({t, fmt::format("frame {}: probability outside [0,1]", t)});
    } else if (std::abs(sum - 1.0) > kRowSumTolerance) {
      out.push_back({t, fmt::format("frame {}: row sums to {:.6f}", t, sum)});
    }
  }
  return out;
}

void require_valid(const PosteriorGrid& grid) {
  auto v = validate(grid);
  if (!v.empty()) throw ValidationError("invalid posterior grid: " + v.front().message);
}

std::string encode_grid(const PosteriorGrid& grid) {
  require_valid(grid);
  json header = {
      {"symbols", grid.vocab.symbols},
      {"blank_index", grid.vocab.blank_index},
      {"separator_index", grid.vocab.separator_index
                              ? json(*grid.vocab.separator_index)
                              : json(nullptr)},
      {"frame_duration_s", grid.frame_duration_s},
      {"num_frames", grid.num_frames()},
  };
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 4 * static_cast<std::size_t>(grid.probs.size()));
  for (Eigen::Index i = 0; i < grid.probs.size(); ++i)
    detail::put_f32(out, grid.probs.data()[i]);
  return out;
}

PosteriorGrid decode_grid(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, kMagic, 4) != 0)
    throw FormatError("not a GPG1 file (bad magic)");
  const std::size_t header_len = detail::get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + header_len) throw FormatError("truncated GPG1 header");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad GPG1 header: ") + e.what());
  }
  PosteriorGrid grid;
  std::size_t num_frames = 0;
  try {
    grid.vocab.symbols = header.at("symbols").get<std::vector<std::string>>();
    grid.vocab.blank_index = header.at("blank_index").get<int>();
    const auto& sep = header.at("separator_index");
    if (!sep.is_null()) grid.vocab.separator_index = sep.get<int>();
    grid.frame_duration_s = header.at("frame_duration_s").get<double>();
    const auto frames = header.at("num_frames").get<long long>();
    if (frames < 0) throw FormatError("negative num_frames");
    num_frames = static_cast<std::size_t>(frames);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad GPG1 header: ") + e.what());
  }
  const std::size_t cols = grid.vocab.symbols.size();
  const std::size_t expected = 8 + header_len + 4 * num_frames * cols;
  if (bytes.size() != expected)
    throw FormatError(fmt::format("GPG1 payload size mismatch: expected {} bytes, got {}",
                                  expected, bytes.size()));
  grid.probs.resize(static_cast<Eigen::Index>(num_frames), static_cast<Eigen::Index>(cols));
  const char* p = bytes.data() + 8 + header_len;
  for (Eigen::Index i = 0; i < grid.probs.size(); ++i, p += 4)
    grid.probs.data()[i] = detail::get_f32(p);
  require_valid(grid);
  return grid;
}

PosteriorGrid load_grid(const std::filesystem::path& path) {
  return decode_grid(detail::read_file(path));
}

void save_grid(const PosteriorGrid& grid, const std::filesystem::path& path) {
  detail::write_file(path, encode_grid(grid));
}

PosteriorGrid merge_separator_into_blank(const PosteriorGrid& grid) {
  if (!grid.vocab.separator_index)
    throw PreconditionError("vocabulary has no separator symbol to merge");
  const int sep = *grid.vocab.separator_index;
  const int blank = grid.vocab.blank_index;
  const int n = grid.num_symbols();

  PosteriorGrid out;
  out.frame_duration_s = grid.frame_duration_s;
  out.probs.resize(grid.probs.rows(), n - 1);
  for (int s = 0, d = 0; s < n; ++s) {
    if (s == sep) continue;
    out.vocab.symbols.push_back(grid.vocab.symbols[s]);
    if (s == blank) {
      out.vocab.blank_index = d;
      out.probs.col(d) = grid.probs.col(blank) + grid.probs.col(sep);
    } else {
      out.probs.col(d) = grid.probs.col(s);
    }
    ++d;
  }
  return out;
}

}  // namespace gcnstd
