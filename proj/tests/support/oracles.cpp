// tests/support/oracles.cpp

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

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gcnstd/cn.hpp"

namespace gcnstd::testing {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::vector<OracleSegment> oracle_network(const PosteriorGrid& g) {
  const int T = g.num_frames();
  const int V = g.num_symbols();
  const int blank = g.vocab.blank_index;
  std::vector<int> best(static_cast<std::size_t>(T + 1), -1);
  for (int t = 1; t <= T; ++t) {
    int arg = 0;
    for (int s = 1; s < V; ++s)
      if (g.at(t, s) > g.at(t, arg)) arg = s;
    best[static_cast<std::size_t>(t)] = arg;
  }
  std::vector<OracleSegment> segs;
  for (int t = 1; t <= T; ++t) {
    const int a = best[static_cast<std::size_t>(t)];
    const int prev = t == 1 ? blank : best[static_cast<std::size_t>(t - 1)];
    if (a != blank && (t == 1 || a != prev)) {
      if (!segs.empty()) segs.back().e = t;
      segs.push_back({a, t, T + 1, T + 1, {}});
    }
  }
  for (auto& seg : segs) {
    seg.d = seg.e;
    for (int t = seg.e - 1; t >= seg.b; --t)
      if (best[static_cast<std::size_t>(t)] == blank) seg.d = t;
    double denom = 0.0;
    for (int t = seg.b; t < seg.e; ++t)
      for (int s = 0; s < V; ++s)
        if (s != blank) denom += g.at(t, s);
    for (int s = 0; s < V; ++s) {
      if (s == blank) continue;
      double num = 0.0;
      for (int t = seg.b; t < seg.e; ++t) num += g.at(t, s);
      seg.posterior[s] = num / denom;
    }
  }
  return segs;
}

double oracle_discrepancy(const PosteriorGrid& g) {
  const auto oracle = oracle_network(g);
  const auto cnet = build_confusion_network(g);
  const auto best = ctc_one_best(g);
  if (cnet.size() != static_cast<int>(oracle.size()) || best.hypothesis.size() != oracle.size()) return kInf;
  double worst = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    if (cnet.alignments[i].b != oracle[i].b || cnet.alignments[i].e != oracle[i].e ||
        best.hypothesis[i] != oracle[i].symbol || best.grapheme_end[i] != oracle[i].d ||
        cnet.segments[i].dist.size() != oracle[i].posterior.size())
      return kInf;
    for (const auto& [id, p] : cnet.segments[i].dist) {
      const int col = g.vocab.find(cnet.vocab[static_cast<std::size_t>(id)]);
      const auto it = oracle[i].posterior.find(col);
      if (it == oracle[i].posterior.end()) return kInf;
      worst = std::max(worst, std::abs(p - it->second));
    }
  }
  return worst;
}

double dense_grid_mtwv(const std::vector<Hit>& hits, const std::vector<ReferenceOccurrence>& refs, double T) {
  std::set<std::string> terms;
  for (const auto& r : refs) terms.insert(r.term);
  double best = -kInf;
  for (int j = 0; j <= 10001; ++j) {
    const double theta = j / 10000.0;
    std::vector<Hit> kept;
    for (const auto& h : hits)
      if (h.score >= theta) kept.push_back(h);
    std::stable_sort(kept.begin(), kept.end(), [](const Hit& x, const Hit& y) { return x.score > y.score; });
    std::vector<bool> used(refs.size(), false);
    std::map<std::string, int> correct, fa, truth;
    for (const auto& r : refs) ++truth[r.term];
    for (const auto& h : kept) {
      const double mid = 0.5 * (h.t_begin + h.t_end);
      int pick = -1;
      double dist = kInf;
      for (std::size_t r = 0; r < refs.size(); ++r) {
        if (used[r] || refs[r].doc_id != h.doc_id || refs[r].term != h.term) continue;
        if (mid < refs[r].t_begin - 0.5 || mid > refs[r].t_end + 0.5) continue;
        const double d = std::abs(mid - 0.5 * (refs[r].t_begin + refs[r].t_end));
        if (d < dist) dist = d, pick = static_cast<int>(r);
      }
      if (pick >= 0) {
        used[static_cast<std::size_t>(pick)] = true;
        ++correct[h.term];
      } else if (truth.count(h.term)) {
        ++fa[h.term];
      }
    }
    double cost = 0.0;
    for (const auto& t : terms)
      cost += 1.0 - static_cast<double>(correct[t]) / truth[t] + 999.9 * fa[t] / (T - truth[t]);
    best = std::max(best, 1.0 - cost / static_cast<double>(terms.size()));
  }
  return best;
}

}  // namespace gcnstd::testing
