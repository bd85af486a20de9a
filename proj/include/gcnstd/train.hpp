// gcnstd/train.hpp

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

#ifndef GCNSTD_TRAIN_HPP_
#define GCNSTD_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcnstd/cn.hpp"
#include "gcnstd/nn.hpp"

namespace gcnstd {

/// One recognized word from the auxiliary (vocabulary-based) recognizer.
struct WordToken {
  std::string doc_id;
  std::string word;
  double t_begin = 0.0;
  double t_end = 0.0;
  double confidence = 0.0;
  bool operator==(const WordToken&) const = default;
};

/// Transcript TSV: doc_id, word, t_begin, t_end, confidence.
std::vector<WordToken> load_transcripts(const std::filesystem::path& path);
void save_transcripts(const std::vector<WordToken>& tokens, const std::filesystem::path& path);

struct HyperParams {
  int masking_n = 1;
  int steps = 200000;
  int batch_size = 32;
  double peak_lr = 1e-3;
  int chunk_len = 200;
  double negative_chunk_prob = 0.5;
  double minlen_loss_weight = 0.1;
  double pinball_tau = 0.1;
  double confidence_threshold = 0.95;
  std::uint64_t seed = 0;

  void check() const;
  bool operator==(const HyperParams&) const = default;
};

inline constexpr int kMinQueryGraphemes = 3;

/// Keeps tokens with confidence strictly above `threshold` and at least
/// kMinQueryGraphemes code points, lowercasing the words.
std::vector<WordToken> extract_training_queries(const std::vector<WordToken>& tokens,
                                                double threshold);

/// y_i = 1 iff at least half of segment i's time extent lies in [t_begin, t_end).
std::vector<double> build_target(const GraphemeConfusionNetwork& cnet, double t_begin, double t_end);

/// Zeroes the weights of the n segments on each side of every 0/1
/// transition in `y`.
std::vector<double> apply_transition_masking(const std::vector<double>& y, int n);

/// Mean clamped binary cross-entropy over positions with w_i = 1; nullopt
/// when every position is masked.
std::optional<double> masked_bce_loss(const Vector& r, const std::vector<double>& y,
                                      const std::vector<double>& w);

/// Length target for the min-length head: unmasked segments of the
/// occurrence spanning 0-based [first, last], at least 1.
int occurrence_length(const std::vector<double>& w, int first, int last);

/// Pinball (quantile) loss of predicted minimum length against the observed
/// occurrence length.
double minlen_loss(double predicted, double occurrence_len, double tau);
/// d minlen_loss / d predicted.
double minlen_loss_grad(double predicted, double occurrence_len, double tau);

struct TrainingChunk {
  std::string doc_id;
  std::vector<SegmentFeatures> features;
  std::vector<int> query;  // grapheme ids
  std::vector<double> y;
  std::vector<double> w;
  int occurrence_len = 0;  // unmasked positive segments (at least 1); 0 for negative chunks
};

struct ChunkLoss {
  double bce = 0.0;
  double minlen = 0.0;
  double total = 0.0;
  bool skipped = false;  // all positions masked
};

/// Training objective on one chunk: masked BCE + lambda * pinball(min_len).
/// Accumulates the gradient into `grad` when non-null.
ChunkLoss chunk_objective(const ModelParams& params, const TrainingChunk& chunk,
                          double minlen_weight, double pinball_tau, ModelParams* grad);

/// lr(step) = peak_lr * sqrt(1000 / max(step, 1000)); step is 1-based.
double learning_rate(double peak_lr, int step);

struct TrainProgress {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean over the logging interval
};

struct TrainOptions {
  int jobs = 0;
  int log_every = 0;  // 0 disables progress callbacks
  std::function<void(const TrainProgress&)> on_progress;
};

struct TrainStats {
  std::size_t num_queries = 0;          // usable bootstrap occurrences
  std::size_t positive_segments = 0;    // unmasked y = 1 over all steps
  std::size_t negative_segments = 0;    // unmasked y = 0 over all steps
  std::size_t skipped_chunks = 0;
  double final_loss = 0.0;
};

struct TrainResult {
  ModelParams params;
  TrainStats stats;
};

/// Bootstraps queries from `tokens`, then runs `hyper.steps` Adam updates.
/// Fully determined by (inputs, hyper, config); independent of options.jobs.
TrainResult train(const std::vector<GraphemeConfusionNetwork>& corpus,
                  const std::vector<WordToken>& tokens, const HyperParams& hyper,
                  const ModelConfig& config, const TrainOptions& options = {});

/// Same, starting from existing parameters.
TrainResult train_from(ModelParams initial, const std::vector<GraphemeConfusionNetwork>& corpus,
                       const std::vector<WordToken>& tokens, const HyperParams& hyper,
                       const TrainOptions& options = {});

}  // namespace gcnstd

#endif  // GCNSTD_TRAIN_HPP_
