// src/eval.cpp

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

#include "gcnstd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"
#include "tsv.hpp"

namespace gcnstd {

using nlohmann::json;

namespace {

struct Counts {
  int n_true = 0;
  int n_correct = 0;
  int n_fa = 0;
};

TwvResult twv_from_counts(const std::vector<std::string>& terms, const std::vector<Counts>& counts,
                          double threshold, double t_speech_s, double beta_fa) {
  TwvResult out;
  out.threshold = threshold;
  double cost = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& c = counts[k];
    TermStats s{terms[k], c.n_true, c.n_correct, c.n_fa};
    s.p_miss = 1.0 - static_cast<double>(c.n_correct) / c.n_true;
    s.p_fa = c.n_fa / (t_speech_s - c.n_true);
    s.twv = 1.0 - (s.p_miss + beta_fa * s.p_fa);
    cost += s.p_miss + beta_fa * s.p_fa;
    out.terms.push_back(std::move(s));
  }
  out.twv = 1.0 - cost / static_cast<double>(terms.size());
  return out;
}

void require_scorable(const Assignment& a, double t_speech_s, const std::vector<Counts>& counts) {
  if (a.terms.empty()) throw PreconditionError("TWV is undefined: no term has reference occurrences");
  if (!(t_speech_s > 0.0)) throw PreconditionError("T_speech must be positive");
  for (std::size_t k = 0; k < a.terms.size(); ++k)
    if (!(t_speech_s > counts[k].n_true))
      throw PreconditionError(fmt::format("T_speech {} s is not larger than N_true of '{}'", t_speech_s, a.terms[k]));
}

// Per-term counts with no hit accepted, plus term -> slot lookup.
std::vector<Counts> base_counts(const Assignment& a, std::map<std::string, std::size_t>& slot) {
  std::vector<Counts> counts(a.terms.size());
  for (std::size_t k = 0; k < a.terms.size(); ++k) slot[a.terms[k]] = k;
  for (const auto& r : a.refs) {
    const auto it = slot.find(r.term);
    if (it != slot.end()) ++counts[it->second].n_true;
  }
  return counts;
}

}  // namespace

std::vector<ReferenceOccurrence> load_references(const std::filesystem::path& path) {
  std::vector<ReferenceOccurrence> refs;
  detail::for_each_tsv_row(detail::read_file(path), 4, path.string(), [&](int, const auto& f) {
    ReferenceOccurrence r{f[0], f[1], detail::parse_double(f[2], "t_begin"), detail::parse_double(f[3], "t_end")};
    if (!(r.t_begin < r.t_end)) throw FormatError("t_begin must be < t_end");
    refs.push_back(std::move(r));
  });
  return refs;
}

void save_references(const std::vector<ReferenceOccurrence>& refs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : refs) out += fmt::format("{}\t{}\t{}\t{}\n", r.doc_id, r.term, r.t_begin, r.t_end);
  detail::write_file(path, out);
}

Assignment match_hits(std::vector<Hit> hits, const std::vector<ReferenceOccurrence>& refs, double tolerance_s,
                      const std::optional<std::vector<std::string>>& terms) {
  Assignment a;
  sort_hits(hits);
  a.hits = std::move(hits);
  a.refs = refs;
  a.matched_ref.assign(a.hits.size(), -1);

  std::set<std::string> scored;
  for (const auto& r : refs)
    if (!terms || std::find(terms->begin(), terms->end(), r.term) != terms->end()) scored.insert(r.term);
  a.terms.assign(scored.begin(), scored.end());

  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < refs.size(); ++i) by_key[{refs[i].doc_id, refs[i].term}].push_back(i);
  std::vector<bool> taken(refs.size(), false);

  for (std::size_t h = 0; h < a.hits.size(); ++h) {
    const auto& hit = a.hits[h];
    const auto it = by_key.find({hit.doc_id, hit.term});
    if (it == by_key.end()) continue;
    const double mid = 0.5 * (hit.t_begin + hit.t_end);
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t i : it->second) {
      const auto& r = refs[i];
      if (taken[i] || mid < r.t_begin - tolerance_s || mid > r.t_end + tolerance_s) continue;
      const double dist = std::abs(mid - 0.5 * (r.t_begin + r.t_end));
      if (best < 0 || dist < best_dist) {
        best = static_cast<int>(i);
        best_dist = dist;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      a.matched_ref[h] = best;
    }
  }
  return a;
}

TwvResult twv(const Assignment& assignment, double threshold, double t_speech_s, double beta_fa) {
  std::map<std::string, std::size_t> slot;
  auto counts = base_counts(assignment, slot);
  require_scorable(assignment, t_speech_s, counts);
  for (std::size_t h = 0; h < assignment.hits.size(); ++h) {
    const auto& hit = assignment.hits[h];
    if (!(hit.score >= threshold)) continue;
    const auto it = slot.find(hit.term);
    if (it == slot.end()) continue;
    (assignment.matched_ref[h] >= 0 ? counts[it->second].n_correct : counts[it->second].n_fa) += 1;
  }
  return twv_from_counts(assignment.terms, counts, threshold, t_speech_s, beta_fa);
}

MtwvResult mtwv_sweep(const Assignment& assignment, double t_speech_s, double beta_fa) {
  std::map<std::string, std::size_t> slot;
  auto counts = base_counts(assignment, slot);
  require_scorable(assignment, t_speech_s, counts);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  MtwvResult out;
  std::vector<std::pair<double, double>> descending;
  descending.emplace_back(kInf, twv_from_counts(assignment.terms, counts, kInf, t_speech_s, beta_fa).twv);

  // Hits are score-sorted; accept each group of equal scores together.
  const auto& hits = assignment.hits;
  for (std::size_t h = 0; h < hits.size();) {
    const double score = hits[h].score;
    bool touched = false;
    for (; h < hits.size() && hits[h].score == score; ++h) {
      const auto it = slot.find(hits[h].term);
      if (it == slot.end()) continue;
      (assignment.matched_ref[h] >= 0 ? counts[it->second].n_correct : counts[it->second].n_fa) += 1;
      touched = true;
    }
    if (touched)
      descending.emplace_back(score, twv_from_counts(assignment.terms, counts, score, t_speech_s, beta_fa).twv);
  }

  out.best_threshold = descending.front().first;
  out.mtwv = descending.front().second;
  for (const auto& [theta, value] : descending) {
    if (value > out.mtwv) {
      out.mtwv = value;
      out.best_threshold = theta;
    }
  }
  out.curve.assign(descending.rbegin(), descending.rend());
  return out;
}

double atwv(const Assignment& assignment, double threshold, double t_speech_s, double beta_fa) {
  return twv(assignment, threshold, t_speech_s, beta_fa).twv;
}

EvalReport evaluate(const std::vector<Hit>& hits, const std::vector<ReferenceOccurrence>& refs, double t_speech_s,
                    const std::string& mode, std::optional<double> threshold, double beta_fa, double tolerance_s,
                    const std::optional<std::vector<std::string>>& terms) {
  if (mode != "atwv" && mode != "mtwv") throw PreconditionError(fmt::format("unknown eval mode '{}'", mode));
  if (mode == "atwv" && !threshold) throw PreconditionError("atwv mode needs a decision threshold");
  const auto assignment = match_hits(hits, refs, tolerance_s, terms);
  EvalReport report;
  report.mode = mode;
  report.t_speech_s = t_speech_s;
  report.beta_fa = beta_fa;
  report.tolerance_s = tolerance_s;
  report.mtwv = mtwv_sweep(assignment, t_speech_s, beta_fa);
  report.threshold = mode == "atwv" ? *threshold : report.mtwv.best_threshold;
  report.at_threshold = twv(assignment, report.threshold, t_speech_s, beta_fa);
  if (mode == "atwv") report.atwv = report.at_threshold.twv;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  auto theta = [](double t) { return std::isinf(t) ? json("inf") : json(t); };
  json terms = json::array();
  for (const auto& s : report.at_threshold.terms)
    terms.push_back({{"term", s.term},
                     {"n_true", s.n_true},
                     {"n_correct", s.n_correct},
                     {"n_fa", s.n_fa},
                     {"p_miss", s.p_miss},
                     {"p_fa", s.p_fa},
                     {"twv", s.twv}});
  json curve = json::array();
  for (const auto& [t, v] : report.mtwv.curve) curve.push_back({theta(t), v});
  json doc = {{"mode", report.mode},
              {"T_speech_s", report.t_speech_s},
              {"beta_fa", report.beta_fa},
              {"tolerance_s", report.tolerance_s},
              {"threshold", theta(report.threshold)},
              {"twv", report.at_threshold.twv},
              {"atwv", report.atwv ? json(*report.atwv) : json(nullptr)},
              {"mtwv", report.mtwv.mtwv},
              {"best_threshold", theta(report.mtwv.best_threshold)},
              {"terms", std::move(terms)},
              {"curve", std::move(curve)}};
  return doc.dump(2) + "\n";
}

}  // namespace gcnstd
