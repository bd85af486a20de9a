// gcnstd/nn.hpp

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

#ifndef GCNSTD_NN_HPP_
#define GCNSTD_NN_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gcnstd/cn.hpp"
#include "gcnstd/common.hpp"

namespace gcnstd {

// Sequences are stored one column per time step: a D x N matrix holds N
// vectors of width D.

/// Architecture hyperparameters. The defaults are the full-size network;
/// tests and desk-scale runs shrink them.
struct ModelConfig {
  int width = 300;  // concatenated forward+backward LSTM output
  int num_layers = 6;
  int cn_embed_dim = 8;
  int query_embed_dim = 32;
  int minlen_units = 20;  // per direction

  int hidden() const { return width / 2; }
  /// Width of one segment's raw feature vector: duration plus
  /// (embedding, probability) for each of the top graphemes.
  int segment_feature_dim() const { return 1 + kTopGraphemes * (cn_embed_dim + 1); }
  void check() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Number of query embeddings produced by pooling.
inline constexpr int kQueryVectors = 3;

/// One LSTM direction. Gate rows are stacked as [input; forget; output;
/// candidate], each `hidden` rows tall.
struct LstmParams {
  Matrix w_x;  // 4H x in
  Matrix w_h;  // 4H x H
  Matrix b;    // 4H x 1
  int hidden() const { return static_cast<int>(w_h.cols()); }
};

struct BiLstmParams {
  LstmParams fwd;
  LstmParams bwd;
};

struct ModelParams {
  ModelConfig config;
  std::vector<std::string> vocab;  // blank-free graphemes

  Matrix cn_embedding;  // cn_embed_dim x (|vocab| + 1), last column = padding slot
  Matrix cn_proj_w;     // width x segment_feature_dim
  Matrix cn_proj_b;     // width x 1
  std::vector<BiLstmParams> cn_stack;

  Matrix query_embedding;  // query_embed_dim x |vocab|
  Matrix query_proj_w;     // width x query_embed_dim
  Matrix query_proj_b;
  std::vector<BiLstmParams> query_stack;

  BiLstmParams minlen_lstm;
  Matrix minlen_w;  // 1 x 2*minlen_units
  Matrix minlen_b;  // 1 x 1

  Matrix alpha;  // 1 x 1
  Matrix beta;   // 1 x 1

  /// Visits every trainable tensor in a fixed order with a stable name.
  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;

  std::size_t num_parameters() const;
  /// Grapheme id, or -1.
  int grapheme_id(const std::string& g) const;
  /// Splits a term into grapheme ids by longest match against the vocabulary.
  /// Throws PreconditionError on an empty term or an unknown grapheme.
  std::vector<int> tokenize(const std::string& term) const;
};

/// Randomly initialized parameters (alpha = 1, beta = 0).
ModelParams init_model(const ModelConfig& config, std::vector<std::string> vocab,
                       std::uint64_t seed);
/// Same shapes, all zeros.
ModelParams zeros_like(const ModelParams& params);
/// dst += scale * src over every tensor.
void add_scaled(ModelParams& dst, const ModelParams& src, double scale);
double squared_norm(const ModelParams& params);

struct LstmState {
  Vector h;
  Vector c;
};

/// Single LSTM step on (x, h, c).
LstmState lstm_cell(const LstmParams& params, const Vector& x, const Vector& h,
                    const Vector& c);

/// Activations of one LSTM direction over a sequence, indexed by time step.
struct LstmTrace {
  Matrix gates;    // 4H x N, post-nonlinearity
  Matrix cells;    // H x N
  Matrix hiddens;  // H x N
};

struct BiLstmTrace {
  Matrix input;
  LstmTrace fwd;
  LstmTrace bwd;
  Matrix output;  // [fwd hiddens; bwd hiddens] (+ input when residual)
};

/// Runs one direction; `reverse` processes time steps N-1..0.
LstmTrace lstm_forward(const LstmParams& params, const Matrix& inputs, bool reverse);
/// Backpropagates dL/dhiddens through one direction; accumulates parameter
/// gradients into `grad` and input gradients into `d_inputs`.
void lstm_backward(const LstmParams& params, const Matrix& inputs, bool reverse,
                   const LstmTrace& trace, const Matrix& d_hiddens, LstmParams& grad,
                   Matrix& d_inputs);

BiLstmTrace bilstm_forward(const BiLstmParams& params, const Matrix& inputs, bool residual);
/// Returns dL/dinputs.
Matrix bilstm_backward(const BiLstmParams& params, const BiLstmTrace& trace,
                       const Matrix& d_output, bool residual, BiLstmParams& grad);

/// Residual biLSTM stack: every layer outputs concat(fwd, bwd) + its input.
Matrix bilstm_stack_forward(const std::vector<BiLstmParams>& stack, const Matrix& inputs);

/// 1-based inclusive position ranges pooled into Q_1 (first half),
/// Q_2 (middle) and Q_3 (second half) for a query of `length` graphemes.
std::array<std::pair<int, int>, kQueryVectors> pooling_ranges(int length);

struct DocumentPass {
  Matrix features;  // segment_feature_dim x N
  std::vector<std::array<int, kTopGraphemes>> embedding_columns;
  std::vector<BiLstmTrace> layers;
  Matrix embeddings;  // R: width x N
};

struct QueryPass {
  std::vector<int> ids;
  Matrix graphemes;  // G: query_embed_dim x M
  std::vector<BiLstmTrace> layers;
  Matrix outputs;  // O: width x M
  Matrix q;        // width x 3
  Eigen::MatrixXi pool_argmax;  // width x 3, 0-based positions
  BiLstmTrace minlen;
  double min_len_raw = 0.0;
};

struct QueryProjection {
  Matrix q;  // width x 3
  double min_len = 0.0;  // clamped at 0
};

/// Raw per-segment input vectors (before the input projection).
Matrix segment_inputs(const ModelParams& params, const std::vector<SegmentFeatures>& features);

DocumentPass forward_document(const ModelParams& params,
                              const std::vector<SegmentFeatures>& features);
void backward_document(const ModelParams& params, const DocumentPass& pass,
                       const Matrix& d_embeddings, ModelParams& grad);

QueryPass forward_query(const ModelParams& params, const std::vector<int>& ids);
void backward_query(const ModelParams& params, const QueryPass& pass, const Matrix& d_q,
                    double d_min_len_raw, ModelParams& grad);

/// Document embeddings R (width x N); independent of any query.
Matrix project_document(const ModelParams& params, const std::vector<SegmentFeatures>& features);
QueryProjection project_query(const ModelParams& params, const std::string& term);
QueryProjection project_query(const ModelParams& params, const std::vector<int>& ids);

struct ScorePass {
  Matrix dots;            // 3 x N, R_i . Q_k
  std::vector<int> best;  // argmax_k per segment (lowest k on ties)
  Vector max_dot;
  Vector logits;  // alpha * max_dot + beta
  Vector probs;   // sigmoid(logits)
};

ScorePass score_forward(const Matrix& embeddings, const Matrix& q, double alpha, double beta);
/// Gradients of the score stage given dL/dlogits.
void score_backward(const Matrix& embeddings, const Matrix& q, double alpha, const ScorePass& pass,
                    const Vector& d_logits, Matrix& d_embeddings, Matrix& d_q, double& d_alpha,
                    double& d_beta);

/// r_i = sigmoid(alpha * max_k(R_i . Q_k) + beta).
Vector score_segments(const Matrix& embeddings, const Matrix& q, double alpha, double beta);

/// Loss callback for gradient_check: returns the loss and, when `grad` is
/// non-null, accumulates its analytic gradient there.
using LossFunction = std::function<double(const ModelParams& params, ModelParams* grad)>;

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t num_checked = 0;
};

/// Compares analytic gradients with central differences over every
/// parameter. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(ModelParams params, const LossFunction& loss,
                                   double perturbation = 1e-4);

// ---------------------------------------------------------------------------

template <class F>
void ModelParams::for_each_tensor(F&& f) {
  auto lstm = [&](const std::string& prefix, BiLstmParams& p) {
    f(prefix + ".fwd.w_x", p.fwd.w_x);
    f(prefix + ".fwd.w_h", p.fwd.w_h);
    f(prefix + ".fwd.b", p.fwd.b);
    f(prefix + ".bwd.w_x", p.bwd.w_x);
    f(prefix + ".bwd.w_h", p.bwd.w_h);
    f(prefix + ".bwd.b", p.bwd.b);
  };
  f(std::string("cn_embedding"), cn_embedding);
  f(std::string("cn_proj.w"), cn_proj_w);
  f(std::string("cn_proj.b"), cn_proj_b);
  for (std::size_t l = 0; l < cn_stack.size(); ++l) lstm("cn_stack." + std::to_string(l), cn_stack[l]);
  f(std::string("query_embedding"), query_embedding);
  f(std::string("query_proj.w"), query_proj_w);
  f(std::string("query_proj.b"), query_proj_b);
  for (std::size_t l = 0; l < query_stack.size(); ++l)
    lstm("query_stack." + std::to_string(l), query_stack[l]);
  lstm("minlen_lstm", minlen_lstm);
  f(std::string("minlen_head.w"), minlen_w);
  f(std::string("minlen_head.b"), minlen_b);
  f(std::string("alpha"), alpha);
  f(std::string("beta"), beta);
}

template <class F>
void ModelParams::for_each_tensor(F&& f) const {
  const_cast<ModelParams*>(this)->for_each_tensor(
      [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
}

}  // namespace gcnstd

#endif  // GCNSTD_NN_HPP_
