// gcnstd/eval.hpp

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

#ifndef GCNSTD_EVAL_HPP_
#define GCNSTD_EVAL_HPP_

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcnstd/search.hpp"

namespace gcnstd {

struct ReferenceOccurrence {
  std::string doc_id;
  std::string term;
  double t_begin = 0.0;
  double t_end = 0.0;
  bool operator==(const ReferenceOccurrence&) const = default;
};

/// References TSV: doc_id, term, t_begin, t_end.
std::vector<ReferenceOccurrence> load_references(const std::filesystem::path& path);
void save_references(const std::vector<ReferenceOccurrence>& refs, const std::filesystem::path& path);

inline constexpr double kDefaultMatchTolerance = 0.5;
inline constexpr double kDefaultBetaFa = 999.9;

/// One-to-one alignment of hits to reference occurrences.
struct Assignment {
  std::vector<Hit> hits;           // sorted by descending score
  std::vector<int> matched_ref;    // per hit: index into refs, or -1 (false alarm)
  std::vector<ReferenceOccurrence> refs;
  std::vector<std::string> terms;  // scored terms (N_true > 0), sorted
};

/// Greedy matching in descending score order: a hit takes the unmatched
/// same-doc, same-term reference whose [t_begin - tol, t_end + tol] window
/// contains the hit midpoint (nearest reference centre first).
/// When `terms` is given, only those terms are scored.
Assignment match_hits(std::vector<Hit> hits, const std::vector<ReferenceOccurrence>& refs,
                      double tolerance_s = kDefaultMatchTolerance,
                      const std::optional<std::vector<std::string>>& terms = std::nullopt);

struct TermStats {
  std::string term;
  int n_true = 0;
  int n_correct = 0;
  int n_fa = 0;
  double p_miss = 0.0;
  double p_fa = 0.0;
  double twv = 0.0;
};

struct TwvResult {
  double threshold = 0.0;
  double twv = 0.0;
  std::vector<TermStats> terms;
};

/// Term-weighted value at decision threshold `threshold` (a hit counts iff
/// score >= threshold): 1 - mean_terms(P_miss + beta * P_FA), with
/// P_FA = N_FA / (T_speech - N_true).
TwvResult twv(const Assignment& assignment, double threshold, double t_speech_s,
              double beta_fa = kDefaultBetaFa);

struct MtwvResult {
  double best_threshold = std::numeric_limits<double>::infinity();
  double mtwv = 0.0;
  /// (threshold, TWV) at every distinct hit score plus +infinity, ascending.
  std::vector<std::pair<double, double>> curve;
};

/// Maximum TWV over all thresholds; ties go to the larger threshold.
MtwvResult mtwv_sweep(const Assignment& assignment, double t_speech_s, double beta_fa = kDefaultBetaFa);

/// TWV at a threshold chosen elsewhere (e.g. on development data).
double atwv(const Assignment& assignment, double threshold, double t_speech_s,
            double beta_fa = kDefaultBetaFa);

struct EvalReport {
  std::string mode;  // "atwv" or "mtwv"
  double t_speech_s = 0.0;
  double beta_fa = kDefaultBetaFa;
  double tolerance_s = kDefaultMatchTolerance;
  double threshold = 0.0;  // threshold the per-term table is reported at
  std::optional<double> atwv;
  MtwvResult mtwv;
  TwvResult at_threshold;
};

/// Runs matching and metrics. With `mode` == "atwv" the per-term table is
/// at `threshold`; with "mtwv" it is at the maximizing threshold.
EvalReport evaluate(const std::vector<Hit>& hits, const std::vector<ReferenceOccurrence>& refs,
                    double t_speech_s, const std::string& mode, std::optional<double> threshold,
                    double beta_fa = kDefaultBetaFa, double tolerance_s = kDefaultMatchTolerance,
                    const std::optional<std::vector<std::string>>& terms = std::nullopt);

std::string report_to_json(const EvalReport& report);

}  // namespace gcnstd

#endif  // GCNSTD_EVAL_HPP_
