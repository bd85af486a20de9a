// gcnstd/cn.hpp

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

#ifndef GCNSTD_CN_HPP_
#define GCNSTD_CN_HPP_

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gcnstd/grid.hpp"

namespace gcnstd {

/// Frame span [b, e) of one confusion-network segment, 1-based frames.
struct SegmentAlignment {
  int b = 1;
  int e = 2;
  int num_frames() const { return e - b; }
  bool operator==(const SegmentAlignment&) const = default;
};

/// Distribution over the blank-free graphemes, sorted by descending
/// probability (ties by grapheme id). Ids index GraphemeConfusionNetwork::vocab.
struct CNSegment {
  std::vector<std::pair<int, double>> dist;
  int top() const { return dist.front().first; }
};

struct GraphemeConfusionNetwork {
  std::string doc_id;
  double frame_duration_s = 0.02;
  std::vector<std::string> vocab;  // graphemes, blank removed
  std::vector<CNSegment> segments;
  std::vector<SegmentAlignment> alignments;

  int size() const { return static_cast<int>(segments.size()); }
  /// Time extent of segment i (0-based) in seconds: [(b-1)dt, (e-1)dt).
  std::pair<double, double> segment_time(int i) const;
  double duration_s() const;
};

struct OneBestResult {
  std::vector<int> hypothesis;  // symbol indices into the grid vocabulary
  std::vector<SegmentAlignment> alignment;
  std::vector<int> grapheme_end;  // d_i: first blank frame of segment i (== e_i if none)
};

/// Greedy CTC decoding that keeps the frame alignment of every grapheme.
/// A segment opens at each frame whose argmax is a grapheme that differs
/// from the running grapheme or follows a blank frame; blank frames extend
/// the open segment. Leading blank frames belong to no segment. Argmax ties
/// go to the lowest symbol index.
OneBestResult ctc_one_best(const PosteriorGrid& grid);

/// Pivot-based confusion network: segment i averages the non-blank posteriors
/// over its frames and renormalizes them (blank mass is dropped).
GraphemeConfusionNetwork build_confusion_network(const PosteriorGrid& grid);

/// Posterior over graphemes (ids in blank-free vocabulary order) for the
/// frames [span.b, span.e): per-grapheme mass normalized by the total
/// non-blank mass. ValidationError when that mass is zero.
CNSegment segment_distribution(const PosteriorGrid& grid, const SegmentAlignment& span);

/// Window placement over `total_frames`, 0-based start.
struct FrameSpan {
  int start = 0;
  int length = 0;
  bool operator==(const FrameSpan&) const = default;
};

inline constexpr int kDefaultWindowFrames = 900;   // 18 s at 20 ms
inline constexpr int kDefaultOverlapFrames = 150;  // 3 s at 20 ms

std::vector<FrameSpan> window_spans(int total_frames,
                                    int window_frames = kDefaultWindowFrames,
                                    int overlap_frames = kDefaultOverlapFrames);

/// Cuts `grid` into the given spans (the inverse of stitch()).
std::vector<PosteriorGrid> split_grid(const PosteriorGrid& grid,
                                      const std::vector<FrameSpan>& spans);

/// Reassembles per-window posteriors. Each overlap is split in half: the
/// first half is taken from the left window, the second from the right.
PosteriorGrid stitch(const std::vector<PosteriorGrid>& window_grids,
                     const std::vector<FrameSpan>& spans);

inline constexpr int kNullGrapheme = -1;
inline constexpr int kTopGraphemes = 3;

struct SegmentFeatures {
  double duration_s = 0.0;
  /// (grapheme id, probability); unused slots hold (kNullGrapheme, 0.0).
  std::array<std::pair<int, double>, kTopGraphemes> top{};
};

std::vector<SegmentFeatures> featurize(const GraphemeConfusionNetwork& cnet);

// JSON-lines corpus I/O. Each line is one network:
//   {"doc_id": .., "vocab": [..], "frame_duration_s": .., "segments":
//    [{"b": .., "e": .., "dist": [[grapheme, prob], ..]}, ..]}
std::string cnet_to_json_line(const GraphemeConfusionNetwork& cnet);
GraphemeConfusionNetwork cnet_from_json_line(const std::string& line);
void save_cnet_corpus(const std::vector<GraphemeConfusionNetwork>& corpus,
                      const std::filesystem::path& path);
std::vector<GraphemeConfusionNetwork> load_cnet_corpus(const std::filesystem::path& path);

}  // namespace gcnstd

#endif  // GCNSTD_CN_HPP_
