// gcnstd/grid.hpp

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

#ifndef GCNSTD_GRID_HPP_
#define GCNSTD_GRID_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcnstd/common.hpp"

namespace gcnstd {

/// Output symbol inventory of a CTC grapheme recognizer.
///
/// `blank_index` is the CTC blank (epsilon). `separator_index`, when set, is
/// the word separator emitted by some recognizers; it is folded into the
/// blank by merge_separator_into_blank() before decoding.
struct Vocabulary {
  std::vector<std::string> symbols;
  int blank_index = 0;
  std::optional<int> separator_index;

  int size() const { return static_cast<int>(symbols.size()); }
  /// Index of `symbol`, or -1.
  int find(const std::string& symbol) const;
  /// Symbols other than the blank, in vocabulary order.
  std::vector<std::string> graphemes() const;

  bool operator==(const Vocabulary&) const = default;
};

using ProbMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-frame posterior probabilities, T rows by |V| columns.
///
/// Storage is 0-based (row t-1 holds frame t); every public API that talks
/// about frames uses 1-based frame numbers t = 1..T.
struct PosteriorGrid {
  Vocabulary vocab;
  double frame_duration_s = 0.02;
  ProbMatrix probs;

  int num_frames() const { return static_cast<int>(probs.rows()); }
  int num_symbols() const { return static_cast<int>(probs.cols()); }
  /// p_ts with 1-based frame t.
  float at(int t, int s) const { return probs(t - 1, s); }

  /// Bitwise equality of all fields.
  bool operator==(const PosteriorGrid& other) const;
};

/// Row-sum tolerance accepted by validate().
inline constexpr double kRowSumTolerance = 1e-4;

struct GridViolation {
  int frame = 0;  // 1-based; 0 for header-level problems
  std::string message;
};

/// Lists every invariant violation; empty iff the grid is valid.
std::vector<GridViolation> validate(const PosteriorGrid& grid);

/// Throws ValidationError naming the first violation, if any.
void require_valid(const PosteriorGrid& grid);

/// Reads a GPG1 file. Throws FormatError or ValidationError.
PosteriorGrid load_grid(const std::filesystem::path& path);

/// Writes a GPG1 file. The grid is validated first; nothing is written on
/// failure.
void save_grid(const PosteriorGrid& grid, const std::filesystem::path& path);

/// In-memory GPG1 encoding used by save_grid/load_grid.
std::string encode_grid(const PosteriorGrid& grid);
PosteriorGrid decode_grid(const std::string& bytes);

/// Folds the separator column into the blank column. The returned grid has
/// one symbol fewer and no separator.
PosteriorGrid merge_separator_into_blank(const PosteriorGrid& grid);

}  // namespace gcnstd

#endif  // GCNSTD_GRID_HPP_
