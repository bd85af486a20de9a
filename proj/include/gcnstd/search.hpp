// gcnstd/search.hpp

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

#ifndef GCNSTD_SEARCH_HPP_
#define GCNSTD_SEARCH_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "gcnstd/cn.hpp"
#include "gcnstd/nn.hpp"

namespace gcnstd {

/// Query-independent projection of one document.
struct DocumentIndexEntry {
  std::string doc_id;
  Matrix embeddings;  // R: width x N
  std::vector<SegmentAlignment> alignments;
  double frame_duration_s = 0.02;
};

struct Index {
  int width = 0;
  std::vector<DocumentIndexEntry> entries;
};

struct Hit {
  std::string doc_id;
  std::string term;
  double t_begin = 0.0;
  double t_end = 0.0;
  double score = 0.0;
  bool operator==(const Hit&) const = default;
};

/// Projects every document through the confusion-network pipeline.
/// Throws PreconditionError when a network uses a grapheme the model lacks.
Index build_index(const ModelParams& params, const std::vector<GraphemeConfusionNetwork>& corpus,
                  int jobs = 1);

/// Persists the index as `dir`/manifest.json (doc ids, alignments) plus
/// `dir`/embeddings.bin (row-major float32 N x width per document).
void save_index(const Index& index, const std::filesystem::path& dir);
Index load_index(const std::filesystem::path& dir);

struct Peak {
  int first = 0;  // 0-based segment range, inclusive
  int last = 0;
  double score = 0.0;
};

/// Maximal runs with r_i >= threshold that are at least `min_segments` long;
/// score is the mean r over the run.
std::vector<Peak> detect_peaks(const Vector& r, double threshold, int min_segments);

/// max(1, round(min_len)).
int min_run_length(double min_len);

inline constexpr double kDefaultDetectThreshold = 0.5;

/// Detections of `term` over the whole index, sorted by descending score
/// (ties keep index order).
std::vector<Hit> search(const Index& index, const ModelParams& params, const std::string& term,
                        double detect_threshold = kDefaultDetectThreshold, int jobs = 1);

/// Hits from per-document segment probabilities (used by search and by
/// baselines that substitute their own scores).
std::vector<Hit> hits_from_scores(const DocumentIndexEntry& entry, const std::string& term,
                                  const Vector& r, double detect_threshold, int min_segments);

/// Stable sort by descending score.
void sort_hits(std::vector<Hit>& hits);

/// Hits TSV: doc_id, term, t_begin, t_end, score.
void save_hits(const std::vector<Hit>& hits, const std::filesystem::path& path);
std::vector<Hit> load_hits(const std::filesystem::path& path);
std::string format_hits(const std::vector<Hit>& hits);

}  // namespace gcnstd

#endif  // GCNSTD_SEARCH_HPP_
