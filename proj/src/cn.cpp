// src/cn.cpp

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

#include "gcnstd/cn.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"

namespace gcnstd {

using nlohmann::json;

namespace {

int frame_argmax(const PosteriorGrid& grid, int row) {
  int best = 0;
  for (int s = 1; s < grid.num_symbols(); ++s)
    if (grid.probs(row, s) > grid.probs(row, best)) best = s;
  return best;
}

void sort_dist(std::vector<std::pair<int, double>>& dist) {
  std::sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
}

void require_decodable(const PosteriorGrid& grid) {
  require_valid(grid);
  if (grid.vocab.separator_index)
    throw PreconditionError("merge the separator into the blank before decoding");
}

}  // namespace

std::pair<double, double> GraphemeConfusionNetwork::segment_time(int i) const {
  const auto& a = alignments.at(static_cast<std::size_t>(i));
  return {(a.b - 1) * frame_duration_s, (a.e - 1) * frame_duration_s};
}

double GraphemeConfusionNetwork::duration_s() const {
  return alignments.empty() ? 0.0 : segment_time(size() - 1).second;
}

OneBestResult ctc_one_best(const PosteriorGrid& grid) {
  require_decodable(grid);
  const int blank = grid.vocab.blank_index;
  const int T = grid.num_frames();

  OneBestResult out;
  bool open = false;
  bool after_blank = false;
  int current = -1;
  auto close = [&](int end_frame) {
    out.alignment.back().e = end_frame;
    if (out.grapheme_end.back() == 0) out.grapheme_end.back() = end_frame;
  };
  for (int t = 1; t <= T; ++t) {
    const int a = frame_argmax(grid, t - 1);
    if (a == blank) {
      if (open && !after_blank) out.grapheme_end.back() = t;
      after_blank = true;
      continue;
    }
    if (!open || after_blank || a != current) {
      if (open) close(t);
      out.hypothesis.push_back(a);
      out.alignment.push_back({t, t + 1});
      out.grapheme_end.push_back(0);
      open = true;
      current = a;
    }
    after_blank = false;
  }
  if (open) close(T + 1);
  return out;
}

CNSegment segment_distribution(const PosteriorGrid& grid, const SegmentAlignment& span) {
  const int blank = grid.vocab.blank_index;
  const int V = grid.num_symbols();
  if (span.b < 1 || span.e <= span.b || span.e > grid.num_frames() + 1)
    throw PreconditionError(fmt::format("segment ({}, {}) outside grid of {} frames", span.b, span.e,
                                        grid.num_frames()));
  std::vector<double> mass(static_cast<std::size_t>(V), 0.0);
  double total = 0.0;
  for (int t = span.b; t < span.e; ++t) {
    for (int s = 0; s < V; ++s) {
      if (s == blank) continue;
      const double p = grid.probs(t - 1, s);
      mass[static_cast<std::size_t>(s)] += p;
      total += p;
    }
  }
  if (!(total > 0.0))
    throw ValidationError(fmt::format("segment ({}, {}) has no non-blank probability mass", span.b, span.e));
  CNSegment seg;
  seg.dist.reserve(static_cast<std::size_t>(V - 1));
  for (int s = 0, id = 0; s < V; ++s) {
    if (s == blank) continue;
    seg.dist.emplace_back(id++, mass[static_cast<std::size_t>(s)] / total);
  }
  sort_dist(seg.dist);
  return seg;
}

GraphemeConfusionNetwork build_confusion_network(const PosteriorGrid& grid) {
  const auto best = ctc_one_best(grid);
  GraphemeConfusionNetwork cnet;
  cnet.frame_duration_s = grid.frame_duration_s;
  cnet.vocab = grid.vocab.graphemes();
  cnet.alignments = best.alignment;
  cnet.segments.reserve(best.alignment.size());
  for (const auto& span : best.alignment) cnet.segments.push_back(segment_distribution(grid, span));
  return cnet;
}

std::vector<FrameSpan> window_spans(int total_frames, int window_frames, int overlap_frames) {
  if (total_frames < 0) throw PreconditionError("negative frame count");
  if (overlap_frames < 0 || window_frames <= overlap_frames)
    throw PreconditionError(fmt::format("need window > overlap >= 0 (window {}, overlap {})",
                                        window_frames, overlap_frames));
  if (overlap_frames % 2 != 0)
    throw PreconditionError(fmt::format("overlap must be even, got {}", overlap_frames));
  std::vector<FrameSpan> spans;
  const int stride = window_frames - overlap_frames;
  for (int start = 0; start < total_frames; start += stride) {
    spans.push_back({start, std::min(window_frames, total_frames - start)});
    if (start + window_frames >= total_frames) break;
  }
  return spans;
}

std::vector<PosteriorGrid> split_grid(const PosteriorGrid& grid,
                                      const std::vector<FrameSpan>& spans) {
  std::vector<PosteriorGrid> out;
  out.reserve(spans.size());
  for (const auto& span : spans) {
    if (span.start < 0 || span.length < 0 || span.start + span.length > grid.num_frames())
      throw PreconditionError(fmt::format("span ({}, {}) exceeds grid of {} frames", span.start,
                                          span.length, grid.num_frames()));
    PosteriorGrid w;
    w.vocab = grid.vocab;
    w.frame_duration_s = grid.frame_duration_s;
    w.probs = grid.probs.middleRows(span.start, span.length);
    out.push_back(std::move(w));
  }
  return out;
}

PosteriorGrid stitch(const std::vector<PosteriorGrid>& window_grids,
                     const std::vector<FrameSpan>& spans) {
  if (window_grids.empty()) throw PreconditionError("stitch needs at least one window");
  if (window_grids.size() != spans.size())
    throw PreconditionError(fmt::format("{} windows but {} spans", window_grids.size(),
                                        spans.size()));
  const auto& first = window_grids.front();
  if (spans.front().start != 0) throw PreconditionError("first span must start at frame 0");

  // cut[k] is the first output row taken from window k.
  std::vector<int> cut(spans.size() + 1, 0);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& g = window_grids[k];
    if (!(g.vocab == first.vocab)) throw PreconditionError(fmt::format("window {} vocabulary mismatch", k));
    if (g.frame_duration_s != first.frame_duration_s)
      throw PreconditionError(fmt::format("window {} frame duration mismatch", k));
    if (g.num_frames() != spans[k].length)
      throw PreconditionError(fmt::format("window {} has {} frames but its span length is {}", k,
                                          g.num_frames(), spans[k].length));
    if (k == 0) continue;
    const int prev_end = spans[k - 1].start + spans[k - 1].length;
    const int overlap = prev_end - spans[k].start;
    if (spans[k].start <= spans[k - 1].start || overlap < 0 ||
        spans[k].start + spans[k].length <= prev_end)
      throw PreconditionError(fmt::format("spans {} and {} are not consecutive overlapping windows",
                                          k - 1, k));
    if (overlap % 2 != 0) throw PreconditionError(fmt::format("odd overlap {} before window {}", overlap, k));
    cut[k] = spans[k].start + overlap / 2;
  }
  const int total = spans.back().start + spans.back().length;
  cut[spans.size()] = total;

  PosteriorGrid out;
  out.vocab = first.vocab;
  out.frame_duration_s = first.frame_duration_s;
  out.probs.resize(total, first.num_symbols());
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const int n = cut[k + 1] - cut[k];
    out.probs.middleRows(cut[k], n) = window_grids[k].probs.middleRows(cut[k] - spans[k].start, n);
  }
  return out;
}

std::vector<SegmentFeatures> featurize(const GraphemeConfusionNetwork& cnet) {
  std::vector<SegmentFeatures> out;
  out.reserve(cnet.segments.size());
  for (int i = 0; i < cnet.size(); ++i) {
    const auto& seg = cnet.segments[static_cast<std::size_t>(i)];
    SegmentFeatures f;
    f.duration_s = cnet.alignments[static_cast<std::size_t>(i)].num_frames() * cnet.frame_duration_s;
    for (int k = 0; k < kTopGraphemes; ++k) {
      f.top[static_cast<std::size_t>(k)] =
          k < static_cast<int>(seg.dist.size()) ? seg.dist[static_cast<std::size_t>(k)]
                                                : std::pair<int, double>{kNullGrapheme, 0.0};
    }
    out.push_back(f);
  }
  return out;
}

std::string cnet_to_json_line(const GraphemeConfusionNetwork& cnet) {
  json segments = json::array();
  for (int i = 0; i < cnet.size(); ++i) {
    json dist = json::array();
    for (const auto& [id, p] : cnet.segments[static_cast<std::size_t>(i)].dist)
      dist.push_back({cnet.vocab.at(static_cast<std::size_t>(id)), p});
    const auto& a = cnet.alignments[static_cast<std::size_t>(i)];
    segments.push_back({{"b", a.b}, {"e", a.e}, {"dist", std::move(dist)}});
  }
  json doc = {{"doc_id", cnet.doc_id},
              {"vocab", cnet.vocab},
              {"frame_duration_s", cnet.frame_duration_s},
              {"segments", std::move(segments)}};
  return doc.dump();
}

GraphemeConfusionNetwork cnet_from_json_line(const std::string& line) {
  GraphemeConfusionNetwork cnet;
  try {
    const json doc = json::parse(line);
    if (doc.contains("doc_id")) cnet.doc_id = doc["doc_id"].get<std::string>();
    cnet.frame_duration_s = doc.at("frame_duration_s").get<double>();
    const auto& segments = doc.at("segments");
    if (doc.contains("vocab")) {
      cnet.vocab = doc["vocab"].get<std::vector<std::string>>();
    } else {
      for (const auto& seg : segments)
        for (const auto& entry : seg.at("dist")) cnet.vocab.push_back(entry.at(0).get<std::string>());
      std::sort(cnet.vocab.begin(), cnet.vocab.end());
      cnet.vocab.erase(std::unique(cnet.vocab.begin(), cnet.vocab.end()), cnet.vocab.end());
    }
    auto id_of = [&](const std::string& g) {
      const auto it = std::find(cnet.vocab.begin(), cnet.vocab.end(), g);
      if (it == cnet.vocab.end()) throw FormatError(fmt::format("grapheme '{}' not in vocab", g));
      return static_cast<int>(it - cnet.vocab.begin());
    };
    int prev_e = 0;
    for (const auto& seg : segments) {
      SegmentAlignment a{seg.at("b").get<int>(), seg.at("e").get<int>()};
      if (a.b < 1 || a.e <= a.b || a.b < prev_e)
        throw FormatError(fmt::format("bad segment alignment ({}, {})", a.b, a.e));
      prev_e = a.e;
      CNSegment s;
      for (const auto& entry : seg.at("dist"))
        s.dist.emplace_back(id_of(entry.at(0).get<std::string>()), entry.at(1).get<double>());
      if (s.dist.empty()) throw FormatError("segment with empty distribution");
      sort_dist(s.dist);
      cnet.alignments.push_back(a);
      cnet.segments.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad confusion network JSON: ") + e.what());
  }
  return cnet;
}

void save_cnet_corpus(const std::vector<GraphemeConfusionNetwork>& corpus,
                      const std::filesystem::path& path) {
  std::string out;
  for (const auto& cnet : corpus) {
    out += cnet_to_json_line(cnet);
    out += '\n';
  }
  detail::write_file(path, out);
}

std::vector<GraphemeConfusionNetwork> load_cnet_corpus(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<GraphemeConfusionNetwork> corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      corpus.push_back(cnet_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return corpus;
}

}  // namespace gcnstd
