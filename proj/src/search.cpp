// src/search.cpp

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

#include "gcnstd/search.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "file_util.hpp"
#include "gcnstd/checkpoint.hpp"
#include "gcnstd/parallel.hpp"
#include "json.hpp"
#include "tsv.hpp"

namespace gcnstd {

using nlohmann::json;

namespace {

constexpr int kIndexSchemaVersion = 1;

std::vector<SegmentFeatures> features_in_model_vocab(const ModelParams& params,
                                                     const GraphemeConfusionNetwork& cnet) {
  auto features = featurize(cnet);
  if (cnet.vocab == params.vocab) return features;
  std::vector<int> remap(cnet.vocab.size());
  for (std::size_t i = 0; i < cnet.vocab.size(); ++i) {
    remap[i] = params.grapheme_id(cnet.vocab[i]);
    if (remap[i] < 0)
      throw PreconditionError(fmt::format("document '{}': grapheme '{}' is not in the model vocabulary",
                                          cnet.doc_id, cnet.vocab[i]));
  }
  for (auto& f : features)
    for (auto& [id, p] : f.top)
      if (id != kNullGrapheme) id = remap[static_cast<std::size_t>(id)];
  return features;
}

}  // namespace

Index build_index(const ModelParams& params, const std::vector<GraphemeConfusionNetwork>& corpus, int jobs) {
  Index index;
  index.width = params.config.width;
  index.entries.resize(corpus.size());
  parallel_for(static_cast<int>(corpus.size()), jobs, [&](int d) {
    const auto& cnet = corpus[static_cast<std::size_t>(d)];
    auto& entry = index.entries[static_cast<std::size_t>(d)];
    entry.doc_id = cnet.doc_id;
    entry.alignments = cnet.alignments;
    entry.frame_duration_s = cnet.frame_duration_s;
    entry.embeddings = project_document(params, features_in_model_vocab(params, cnet));
  });
  return index;
}

void save_index(const Index& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json docs = json::array();
  std::vector<const Matrix*> blobs;
  std::vector<Matrix> transposed;
  transposed.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    json alignments = json::array();
    for (const auto& a : e.alignments) alignments.push_back({a.b, a.e});
    docs.push_back({{"doc_id", e.doc_id},
                    {"num_segments", e.alignments.size()},
                    {"frame_duration_s", e.frame_duration_s},
                    {"alignments", std::move(alignments)}});
    transposed.push_back(e.embeddings.transpose());
  }
  for (const auto& m : transposed) blobs.push_back(&m);
  json manifest = {{"schema_version", kIndexSchemaVersion},
                   {"kind", "gcnstd-index"},
                   {"width", index.width},
                   {"blob", "embeddings.bin"},
                   {"documents", std::move(docs)}};
  detail::write_file(dir / "embeddings.bin", encode_tensors(blobs));
  detail::write_file(dir / "manifest.json", manifest.dump() + "\n");
}

Index load_index(const std::filesystem::path& dir) {
  Index index;
  std::vector<Matrix> transposed;
  try {
    const json manifest = json::parse(detail::read_file(dir / "manifest.json"));
    if (manifest.at("schema_version").get<int>() != kIndexSchemaVersion)
      throw FormatError("unsupported index schema_version");
    index.width = manifest.at("width").get<int>();
    for (const auto& d : manifest.at("documents")) {
      DocumentIndexEntry e;
      e.doc_id = d.at("doc_id").get<std::string>();
      e.frame_duration_s = d.at("frame_duration_s").get<double>();
      for (const auto& a : d.at("alignments")) e.alignments.push_back({a.at(0).get<int>(), a.at(1).get<int>()});
      if (d.at("num_segments").get<std::size_t>() != e.alignments.size())
        throw FormatError(fmt::format("document '{}': segment count mismatch", e.doc_id));
      transposed.emplace_back(static_cast<Eigen::Index>(e.alignments.size()), index.width);
      index.entries.push_back(std::move(e));
    }
    std::vector<Matrix*> blobs;
    for (auto& m : transposed) blobs.push_back(&m);
    decode_tensors(detail::read_file(dir / manifest.value("blob", std::string("embeddings.bin"))), blobs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad index manifest: ") + e.what());
  }
  for (std::size_t i = 0; i < index.entries.size(); ++i) index.entries[i].embeddings = transposed[i].transpose();
  return index;
}

std::vector<Peak> detect_peaks(const Vector& r, double threshold, int min_segments) {
  std::vector<Peak> peaks;
  const auto N = static_cast<int>(r.size());
  for (int i = 0; i < N;) {
    if (!(r(i) >= threshold)) {
      ++i;
      continue;
    }
    int j = i;
    double sum = 0.0;
    while (j < N && r(j) >= threshold) sum += r(j++);
    if (j - i >= min_segments) peaks.push_back({i, j - 1, sum / (j - i)});
    i = j;
  }
  return peaks;
}

int min_run_length(double min_len) { return std::max(1, static_cast<int>(std::lround(min_len))); }

std::vector<Hit> hits_from_scores(const DocumentIndexEntry& entry, const std::string& term, const Vector& r,
                                  double detect_threshold, int min_segments) {
  std::vector<Hit> hits;
  for (const auto& p : detect_peaks(r, detect_threshold, min_segments)) {
    const auto& first = entry.alignments[static_cast<std::size_t>(p.first)];
    const auto& last = entry.alignments[static_cast<std::size_t>(p.last)];
    hits.push_back({entry.doc_id, term, (first.b - 1) * entry.frame_duration_s,
                    (last.e - 1) * entry.frame_duration_s, p.score});
  }
  return hits;
}

void sort_hits(std::vector<Hit>& hits) {
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.score > b.score; });
}

std::vector<Hit> search(const Index& index, const ModelParams& params, const std::string& term,
                        double detect_threshold, int jobs) {
  if (index.width != params.config.width) throw PreconditionError("index width does not match the model");
  const auto query = project_query(params, term);
  const int min_segments = min_run_length(query.min_len);
  const double alpha = params.alpha(0, 0);
  const double beta = params.beta(0, 0);
  std::vector<std::vector<Hit>> per_doc(index.entries.size());
  parallel_for(static_cast<int>(index.entries.size()), jobs, [&](int d) {
    const auto& entry = index.entries[static_cast<std::size_t>(d)];
    if (entry.alignments.empty()) return;
    const Vector r = score_segments(entry.embeddings, query.q, alpha, beta);
    per_doc[static_cast<std::size_t>(d)] = hits_from_scores(entry, term, r, detect_threshold, min_segments);
  });
  std::vector<Hit> hits;
  for (auto& h : per_doc) hits.insert(hits.end(), h.begin(), h.end());
  sort_hits(hits);
  return hits;
}

std::string format_hits(const std::vector<Hit>& hits) {
  std::string out;
  for (const auto& h : hits) out += fmt::format("{}\t{}\t{}\t{}\t{}\n", h.doc_id, h.term, h.t_begin, h.t_end, h.score);
  return out;
}

void save_hits(const std::vector<Hit>& hits, const std::filesystem::path& path) {
  detail::write_file(path, format_hits(hits));
}

std::vector<Hit> load_hits(const std::filesystem::path& path) {
  std::vector<Hit> hits;
  detail::for_each_tsv_row(detail::read_file(path), 5, path.string(), [&](int, const auto& f) {
    hits.push_back({f[0], f[1], detail::parse_double(f[2], "t_begin"), detail::parse_double(f[3], "t_end"),
                    detail::parse_double(f[4], "score")});
  });
  return hits;
}

}  // namespace gcnstd
