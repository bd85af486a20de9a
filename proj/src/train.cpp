// src/train.cpp

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

#include "gcnstd/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "file_util.hpp"
#include "gcnstd/parallel.hpp"
#include "tsv.hpp"

namespace gcnstd {

namespace {

constexpr double kLogClamp = 1e-7;
constexpr double kClipNorm = 5.0;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kGradientSlots = 8;

std::size_t count_code_points(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

// A bootstrap query anchored in one document.
struct Occurrence {
  std::size_t doc = 0;
  std::string word;
  std::vector<int> ids;
  int first = 0;  // 0-based segment range, inclusive
  int last = 0;
};

}  // namespace

void HyperParams::check() const {
  if (masking_n < 0) throw PreconditionError("masking_n must be >= 0");
  if (steps < 0) throw PreconditionError("steps must be >= 0");
  if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (chunk_len < 1) throw PreconditionError("chunk_len must be >= 1");
  if (!(peak_lr >= 0.0)) throw PreconditionError("peak_lr must be >= 0");
  if (!(negative_chunk_prob >= 0.0 && negative_chunk_prob <= 1.0))
    throw PreconditionError("negative_chunk_prob must be in [0,1]");
  if (!(pinball_tau > 0.0 && pinball_tau < 1.0)) throw PreconditionError("pinball_tau must be in (0,1)");
  if (!(minlen_loss_weight >= 0.0)) throw PreconditionError("minlen_loss_weight must be >= 0");
}

std::vector<WordToken> load_transcripts(const std::filesystem::path& path) {
  std::vector<WordToken> tokens;
  detail::for_each_tsv_row(detail::read_file(path), 5, path.string(), [&](int, const auto& f) {
    WordToken t{f[0], f[1], detail::parse_double(f[2], "t_begin"), detail::parse_double(f[3], "t_end"),
                detail::parse_double(f[4], "confidence")};
    if (!(t.t_begin < t.t_end)) throw FormatError("t_begin must be < t_end");
    if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) throw FormatError("confidence outside [0,1]");
    tokens.push_back(std::move(t));
  });
  return tokens;
}

void save_transcripts(const std::vector<WordToken>& tokens, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : tokens)
    out += fmt::format("{}\t{}\t{}\t{}\t{}\n", t.doc_id, t.word, t.t_begin, t.t_end, t.confidence);
  detail::write_file(path, out);
}

std::vector<WordToken> extract_training_queries(const std::vector<WordToken>& tokens, double threshold) {
  std::vector<WordToken> out;
  for (const auto& t : tokens) {
    if (!(t.confidence > threshold)) continue;
    if (count_code_points(t.word) < kMinQueryGraphemes) continue;
    WordToken kept = t;
    kept.word = ascii_lower(t.word);
    out.push_back(std::move(kept));
  }
  return out;
}

std::vector<double> build_target(const GraphemeConfusionNetwork& cnet, double t_begin, double t_end) {
  std::vector<double> y(static_cast<std::size_t>(cnet.size()), 0.0);
  for (int i = 0; i < cnet.size(); ++i) {
    const auto [sb, se] = cnet.segment_time(i);
    const double inside = std::max(0.0, std::min(se, t_end) - std::max(sb, t_begin));
    // 1e-9 s slack for spans computed from frame counts.
    if (inside >= 0.5 * (se - sb) - 1e-9) y[static_cast<std::size_t>(i)] = 1.0;
  }
  return y;
}

std::vector<double> apply_transition_masking(const std::vector<double>& y, int n) {
  if (n < 0) throw PreconditionError("masking width must be >= 0");
  const int L = static_cast<int>(y.size());
  std::vector<double> w(y.size(), 1.0);
  for (int i = 0; i + 1 < L; ++i) {
    if (y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i + 1)]) continue;
    // Transition after 0-based position i: zero [i-n+1, i+n].
    for (int j = std::max(0, i - n + 1); j <= std::min(L - 1, i + n); ++j) w[static_cast<std::size_t>(j)] = 0.0;
  }
  return w;
}

std::optional<double> masked_bce_loss(const Vector& r, const std::vector<double>& y,
                                      const std::vector<double>& w) {
  if (static_cast<std::size_t>(r.size()) != y.size() || y.size() != w.size())
    throw PreconditionError("masked_bce_loss: length mismatch");
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double p = r(static_cast<Eigen::Index>(i));
    sum -= y[i] * std::log(std::max(p, kLogClamp)) + (1.0 - y[i]) * std::log(std::max(1.0 - p, kLogClamp));
    count += 1.0;
  }
  if (count == 0.0) return std::nullopt;
  return sum / count;
}

int occurrence_length(const std::vector<double>& w, int first, int last) {
  if (first < 0 || last < first || last >= static_cast<int>(w.size()))
    throw PreconditionError("occurrence_length: range outside the chunk");
  int core = 0;
  for (int s = first; s <= last; ++s) core += w[static_cast<std::size_t>(s)] == 1.0 ? 1 : 0;
  return std::max(1, core);
}

double minlen_loss(double predicted, double occurrence_len, double tau) {
  const double u = occurrence_len - predicted;
  return std::max(tau * u, (tau - 1.0) * u);
}

double minlen_loss_grad(double predicted, double occurrence_len, double tau) {
  const double u = occurrence_len - predicted;
  if (u > 0) return -tau;
  if (u < 0) return 1.0 - tau;
  return 0.0;
}

ChunkLoss chunk_objective(const ModelParams& params, const TrainingChunk& chunk, double minlen_weight,
                          double pinball_tau, ModelParams* grad) {
  const std::size_t L = chunk.features.size();
  if (chunk.y.size() != L || chunk.w.size() != L) throw PreconditionError("chunk: length mismatch");
  ChunkLoss out;
  const double masked = static_cast<double>(std::count(chunk.w.begin(), chunk.w.end(), 1.0));
  if (masked == 0.0) {
    out.skipped = true;
    return out;
  }
  const auto doc = forward_document(params, chunk.features);
  const auto query = forward_query(params, chunk.query);
  const double alpha = params.alpha(0, 0);
  const auto scores = score_forward(doc.embeddings, query.q, alpha, params.beta(0, 0));

  // BCE written on logits: -log(max(sigmoid(z), eps)) and its complement.
  Vector d_logits = Vector::Zero(static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < L; ++i) {
    if (chunk.w[i] == 0.0) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const double z = scores.logits(ii);
    const double log_p = log_sigmoid(z);
    const double log_q = log_sigmoid(-z);
    const double p = std::exp(log_p);
    if (chunk.y[i] > 0.5) {
      if (log_p > std::log(kLogClamp)) {
        out.bce -= log_p;
        d_logits(ii) = -(1.0 - p);
      } else {
        out.bce -= std::log(kLogClamp);
      }
    } else {
      if (log_q > std::log(kLogClamp)) {
        out.bce -= log_q;
        d_logits(ii) = p;
      } else {
        out.bce -= std::log(kLogClamp);
      }
    }
  }
  out.bce /= masked;
  d_logits /= masked;

  double d_min_len = 0.0;
  if (chunk.occurrence_len > 0) {
    out.minlen = minlen_loss(query.min_len_raw, chunk.occurrence_len, pinball_tau);
    d_min_len = minlen_weight * minlen_loss_grad(query.min_len_raw, chunk.occurrence_len, pinball_tau);
  }
  out.total = out.bce + minlen_weight * out.minlen;

  if (grad) {
    Matrix d_embeddings, d_q;
    double d_alpha = 0.0, d_beta = 0.0;
    score_backward(doc.embeddings, query.q, alpha, scores, d_logits, d_embeddings, d_q, d_alpha, d_beta);
    grad->alpha(0, 0) += d_alpha;
    grad->beta(0, 0) += d_beta;
    backward_document(params, doc, d_embeddings, *grad);
    backward_query(params, query, d_q, d_min_len, *grad);
  }
  return out;
}

double learning_rate(double peak_lr, int step) {
  return peak_lr * std::sqrt(1000.0 / std::max(static_cast<double>(step), 1000.0));
}

TrainResult train(const std::vector<GraphemeConfusionNetwork>& corpus, const std::vector<WordToken>& tokens,
                  const HyperParams& hyper, const ModelConfig& config, const TrainOptions& options) {
  if (corpus.empty()) throw PreconditionError("training corpus is empty");
  return train_from(init_model(config, corpus.front().vocab, hyper.seed ^ 0x5eedULL), corpus, tokens, hyper,
                    options);
}

TrainResult train_from(ModelParams initial, const std::vector<GraphemeConfusionNetwork>& corpus,
                       const std::vector<WordToken>& tokens, const HyperParams& hyper,
                       const TrainOptions& options) {
  hyper.check();
  if (corpus.empty()) throw PreconditionError("training corpus is empty");

  std::map<std::string, std::size_t> doc_index;
  std::vector<std::vector<SegmentFeatures>> features;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    if (corpus[d].vocab != initial.vocab)
      throw PreconditionError(fmt::format("document '{}' vocabulary differs from the model's", corpus[d].doc_id));
    doc_index.emplace(corpus[d].doc_id, d);
    features.push_back(featurize(corpus[d]));
  }

  // Words the auxiliary recognizer reported per document, at any confidence.
  std::vector<std::set<std::string>> doc_words(corpus.size());
  for (const auto& t : tokens) {
    const auto it = doc_index.find(t.doc_id);
    if (it != doc_index.end()) doc_words[it->second].insert(ascii_lower(t.word));
  }

  std::vector<Occurrence> occurrences;
  for (const auto& q : extract_training_queries(tokens, hyper.confidence_threshold)) {
    const auto it = doc_index.find(q.doc_id);
    if (it == doc_index.end()) continue;
    std::vector<int> ids;
    try {
      ids = initial.tokenize(q.word);
    } catch (const PreconditionError&) {
      continue;
    }
    const auto y = build_target(corpus[it->second], q.t_begin, q.t_end);
    const auto first = std::find(y.begin(), y.end(), 1.0);
    if (first == y.end()) continue;
    const auto last = std::find(y.rbegin(), y.rend(), 1.0);
    occurrences.push_back({it->second, q.word, std::move(ids), static_cast<int>(first - y.begin()),
                           static_cast<int>(y.rend() - last) - 1});
  }
  if (occurrences.empty()) throw PreconditionError("no usable training queries could be extracted");

  // (doc, word) -> occurrence indices, for labelling every known occurrence in a window.
  std::map<std::pair<std::size_t, std::string>, std::vector<std::size_t>> by_doc_word;
  for (std::size_t i = 0; i < occurrences.size(); ++i)
    by_doc_word[{occurrences[i].doc, occurrences[i].word}].push_back(i);

  TrainResult result{std::move(initial), {}};
  result.stats.num_queries = occurrences.size();
  ModelParams& params = result.params;
  ModelParams adam_m = zeros_like(params);
  ModelParams adam_v = zeros_like(params);

  std::mt19937_64 rng(hyper.seed);
  std::uniform_int_distribution<std::size_t> pick_occurrence(0, occurrences.size() - 1);
  std::bernoulli_distribution pick_negative(hyper.negative_chunk_prob);
  const int L = hyper.chunk_len;

  auto make_chunk = [&](const Occurrence& occ, bool negative) {
    TrainingChunk chunk;
    chunk.query = occ.ids;
    std::size_t doc = occ.doc;
    if (negative) {
      std::vector<std::size_t> candidates;
      for (std::size_t d = 0; d < corpus.size(); ++d)
        if (!doc_words[d].count(occ.word) && !features[d].empty()) candidates.push_back(d);
      if (candidates.empty()) negative = false;
      else doc = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    }
    const int N = static_cast<int>(features[doc].size());
    const int len = std::min(L, N);
    int start = 0;
    if (negative) {
      start = std::uniform_int_distribution<int>(0, N - len)(rng);
    } else {
      const int lo = std::max(0, occ.last - len + 1);
      const int hi = std::min(occ.first, N - len);
      start = lo >= hi ? std::min(lo, N - len) : std::uniform_int_distribution<int>(lo, hi)(rng);
    }
    chunk.doc_id = corpus[doc].doc_id;
    chunk.features.assign(features[doc].begin() + start, features[doc].begin() + start + len);
    chunk.y.assign(static_cast<std::size_t>(len), 0.0);
    if (!negative) {
      for (std::size_t idx : by_doc_word[{doc, occ.word}]) {
        const auto& o = occurrences[idx];
        for (int s = std::max(o.first, start); s <= std::min(o.last, start + len - 1); ++s)
          chunk.y[static_cast<std::size_t>(s - start)] = 1.0;
      }
    }
    chunk.w = apply_transition_masking(chunk.y, hyper.masking_n);
    // Masked boundary outputs are untrained, so the length the detector can
    // rely on is the unmasked core of the occurrence.
    if (!negative)
      chunk.occurrence_len = occurrence_length(chunk.w, std::max(occ.first, start) - start,
                                               std::min(occ.last, start + len - 1) - start);
    return chunk;
  };

  const int slots = std::min(kGradientSlots, hyper.batch_size);
  std::vector<ModelParams> slot_grads(static_cast<std::size_t>(slots), zeros_like(params));
  std::vector<ChunkLoss> losses(static_cast<std::size_t>(hyper.batch_size));
  double interval_loss = 0.0;
  int interval_steps = 0;

  for (int step = 1; step <= hyper.steps; ++step) {
    std::vector<TrainingChunk> batch;
    batch.reserve(static_cast<std::size_t>(hyper.batch_size));
    for (int b = 0; b < hyper.batch_size; ++b) {
      const auto& occ = occurrences[pick_occurrence(rng)];
      const bool negative = pick_negative(rng);
      batch.push_back(make_chunk(occ, negative));
    }

    // Chunk c accumulates into slot c % slots, in increasing c, so the sum
    // is independent of how many threads run the slots.
    parallel_for(slots, options.jobs, [&](int s) {
      auto& g = slot_grads[static_cast<std::size_t>(s)];
      g.for_each_tensor([](const std::string&, Matrix& m) { m.setZero(); });
      for (int c = s; c < hyper.batch_size; c += slots)
        losses[static_cast<std::size_t>(c)] = chunk_objective(
            params, batch[static_cast<std::size_t>(c)], hyper.minlen_loss_weight, hyper.pinball_tau, &g);
    });

    int used = 0;
    double batch_loss = 0.0;
    for (int c = 0; c < hyper.batch_size; ++c) {
      const auto& l = losses[static_cast<std::size_t>(c)];
      if (l.skipped) {
        ++result.stats.skipped_chunks;
        continue;
      }
      ++used;
      batch_loss += l.total;
      const auto& chunk = batch[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < chunk.y.size(); ++i) {
        if (chunk.w[i] == 0.0) continue;
        (chunk.y[i] > 0.5 ? result.stats.positive_segments : result.stats.negative_segments) += 1;
      }
    }
    if (used == 0) continue;
    batch_loss /= used;

    ModelParams& grad = slot_grads[0];
    for (int s = 1; s < slots; ++s) add_scaled(grad, slot_grads[static_cast<std::size_t>(s)], 1.0);
    double scale = 1.0 / used;
    const double norm = std::sqrt(squared_norm(grad)) * scale;
    if (norm > kClipNorm) scale *= kClipNorm / norm;

    const double lr = learning_rate(hyper.peak_lr, step);
    const double correction1 = 1.0 - std::pow(kAdamBeta1, step);
    const double correction2 = 1.0 - std::pow(kAdamBeta2, step);
    std::vector<Matrix*> m_tensors, v_tensors, g_tensors;
    adam_m.for_each_tensor([&](const std::string&, Matrix& m) { m_tensors.push_back(&m); });
    adam_v.for_each_tensor([&](const std::string&, Matrix& m) { v_tensors.push_back(&m); });
    grad.for_each_tensor([&](const std::string&, Matrix& m) { g_tensors.push_back(&m); });
    std::size_t k = 0;
    params.for_each_tensor([&](const std::string&, Matrix& p) {
      Matrix& m = *m_tensors[k];
      Matrix& v = *v_tensors[k];
      const Matrix g = *g_tensors[k] * scale;
      m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
      v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + kAdamEps);
      ++k;
    });

    result.stats.final_loss = batch_loss;
    interval_loss += batch_loss;
    ++interval_steps;
    if (options.log_every > 0 && options.on_progress && step % options.log_every == 0) {
      options.on_progress({step, lr, interval_loss / interval_steps});
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  return result;
}

}  // namespace gcnstd
