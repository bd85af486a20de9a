// src/nn.cpp

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

#include "gcnstd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace gcnstd {

namespace {

template <class Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

LstmParams lstm_zeros(int in, int hidden) {
  return {Matrix::Zero(4 * hidden, in), Matrix::Zero(4 * hidden, hidden),
          Matrix::Zero(4 * hidden, 1)};
}

BiLstmParams bilstm_zeros(int in, int hidden) {
  return {lstm_zeros(in, hidden), lstm_zeros(in, hidden)};
}

// Shape skeleton shared by init_model and zeros_like.
ModelParams zero_model(const ModelConfig& cfg, std::vector<std::string> vocab) {
  cfg.check();
  const int V = static_cast<int>(vocab.size());
  const int W = cfg.width;
  ModelParams p;
  p.config = cfg;
  p.vocab = std::move(vocab);
  p.cn_embedding = Matrix::Zero(cfg.cn_embed_dim, V + 1);
  p.cn_proj_w = Matrix::Zero(W, cfg.segment_feature_dim());
  p.cn_proj_b = Matrix::Zero(W, 1);
  p.cn_stack.assign(static_cast<std::size_t>(cfg.num_layers), bilstm_zeros(W, cfg.hidden()));
  p.query_embedding = Matrix::Zero(cfg.query_embed_dim, V);
  p.query_proj_w = Matrix::Zero(W, cfg.query_embed_dim);
  p.query_proj_b = Matrix::Zero(W, 1);
  p.query_stack.assign(static_cast<std::size_t>(cfg.num_layers), bilstm_zeros(W, cfg.hidden()));
  p.minlen_lstm = bilstm_zeros(cfg.query_embed_dim, cfg.minlen_units);
  p.minlen_w = Matrix::Zero(1, 2 * cfg.minlen_units);
  p.minlen_b = Matrix::Zero(1, 1);
  p.alpha = Matrix::Zero(1, 1);
  p.beta = Matrix::Zero(1, 1);
  return p;
}

Matrix run_stack(const std::vector<BiLstmParams>& stack, const Matrix& inputs,
                 std::vector<BiLstmTrace>* traces) {
  Matrix x = inputs;
  for (const auto& layer : stack) {
    auto tr = bilstm_forward(layer, x, /*residual=*/true);
    x = tr.output;
    if (traces) traces->push_back(std::move(tr));
  }
  return x;
}

Matrix backprop_stack(const std::vector<BiLstmParams>& stack,
                      const std::vector<BiLstmTrace>& traces, Matrix d_out,
                      std::vector<BiLstmParams>& grad) {
  for (std::size_t l = stack.size(); l-- > 0;)
    d_out = bilstm_backward(stack[l], traces[l], d_out, /*residual=*/true, grad[l]);
  return d_out;
}

}  // namespace

void ModelConfig::check() const {
  if (width < 2 || width % 2 != 0)
    throw PreconditionError(fmt::format("model width must be even and >= 2, got {}", width));
  if (num_layers < 0 || cn_embed_dim < 1 || query_embed_dim < 1 || minlen_units < 1)
    throw PreconditionError("model dimensions must be positive");
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

int ModelParams::grapheme_id(const std::string& g) const {
  const auto it = std::find(vocab.begin(), vocab.end(), g);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

std::vector<int> ModelParams::tokenize(const std::string& term) const {
  if (term.empty()) throw PreconditionError("empty query term");
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < term.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (int id = 0; id < static_cast<int>(vocab.size()); ++id) {
      const auto& g = vocab[static_cast<std::size_t>(id)];
      if (g.size() > best_len && term.compare(pos, g.size(), g) == 0) {
        best = id;
        best_len = g.size();
      }
    }
    if (best < 0)
      throw PreconditionError(fmt::format("term '{}' has a grapheme outside the model vocabulary at byte {}",
                                          term, pos));
    ids.push_back(best);
    pos += best_len;
  }
  return ids;
}

ModelParams init_model(const ModelConfig& config, std::vector<std::string> vocab,
                       std::uint64_t seed) {
  if (vocab.empty()) throw PreconditionError("model vocabulary is empty");
  ModelParams p = zero_model(config, std::move(vocab));
  std::mt19937_64 rng(seed);
  auto uniform = [&](Matrix& m, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  auto normal = [&](Matrix& m, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  auto glorot = [&](Matrix& m) { uniform(m, std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()))); };
  auto lstm = [&](LstmParams& l) {
    const double k = 1.0 / std::sqrt(static_cast<double>(l.hidden()));
    uniform(l.w_x, k);
    uniform(l.w_h, k);
    l.b.setZero();
    l.b.middleRows(l.hidden(), l.hidden()).setOnes();  // forget gate
  };
  auto bilstm = [&](BiLstmParams& b) {
    lstm(b.fwd);
    lstm(b.bwd);
  };

  normal(p.cn_embedding, 1.0);
  p.cn_embedding.rightCols(1).setZero();
  glorot(p.cn_proj_w);
  for (auto& l : p.cn_stack) bilstm(l);
  normal(p.query_embedding, 1.0);
  glorot(p.query_proj_w);
  for (auto& l : p.query_stack) bilstm(l);
  bilstm(p.minlen_lstm);
  glorot(p.minlen_w);
  p.alpha(0, 0) = 1.0;
  p.beta(0, 0) = 0.0;
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  return zero_model(params.config, params.vocab);
}

void add_scaled(ModelParams& dst, const ModelParams& src, double scale) {
  std::vector<const Matrix*> from;
  src.for_each_tensor([&](const std::string&, const Matrix& m) { from.push_back(&m); });
  std::size_t i = 0;
  dst.for_each_tensor([&](const std::string&, Matrix& m) { m += scale * *from[i++]; });
}

double squared_norm(const ModelParams& params) {
  double s = 0.0;
  params.for_each_tensor([&](const std::string&, const Matrix& m) { s += m.squaredNorm(); });
  return s;
}

LstmState lstm_cell(const LstmParams& params, const Vector& x, const Vector& h, const Vector& c) {
  const int H = params.hidden();
  if (x.size() != params.w_x.cols() || h.size() != H || c.size() != H)
    throw PreconditionError("lstm_cell: shape mismatch");
  const Vector z = params.w_x * x + params.w_h * h + params.b.col(0);
  const Vector i = sigmoid(z.segment(0, H));
  const Vector f = sigmoid(z.segment(H, H));
  const Vector o = sigmoid(z.segment(2 * H, H));
  const Vector g = z.segment(3 * H, H).array().tanh().matrix();
  LstmState next;
  next.c = f.cwiseProduct(c) + i.cwiseProduct(g);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

LstmTrace lstm_forward(const LstmParams& params, const Matrix& inputs, bool reverse) {
  const int H = params.hidden();
  const Eigen::Index N = inputs.cols();
  if (inputs.rows() != params.w_x.cols()) throw PreconditionError("lstm_forward: input width mismatch");
  LstmTrace tr;
  tr.gates.noalias() = params.w_x * inputs;
  tr.gates.colwise() += params.b.col(0);
  tr.cells.resize(H, N);
  tr.hiddens.resize(H, N);
  Vector h = Vector::Zero(H);
  Vector c = Vector::Zero(H);
  Vector z(4 * H);
  for (Eigen::Index step = 0; step < N; ++step) {
    const Eigen::Index t = reverse ? N - 1 - step : step;
    z = tr.gates.col(t);
    z.noalias() += params.w_h * h;
    auto gates = tr.gates.col(t);
    gates.head(3 * H) = sigmoid(z.head(3 * H));
    gates.tail(H) = z.tail(H).array().tanh().matrix();
    c = gates.segment(H, H).cwiseProduct(c) + gates.head(H).cwiseProduct(gates.tail(H));
    h = gates.segment(2 * H, H).cwiseProduct(c.array().tanh().matrix());
    tr.cells.col(t) = c;
    tr.hiddens.col(t) = h;
  }
  return tr;
}

void lstm_backward(const LstmParams& params, const Matrix& inputs, bool reverse,
                   const LstmTrace& trace, const Matrix& d_hiddens, LstmParams& grad,
                   Matrix& d_inputs) {
  const int H = params.hidden();
  const Eigen::Index N = inputs.cols();
  if (N == 0) return;
  Matrix dz_all(4 * H, N);
  Matrix h_prev(H, N);
  Vector dh_next = Vector::Zero(H);
  Vector dc_next = Vector::Zero(H);
  Vector dc(H), tc(H);
  for (Eigen::Index step = N; step-- > 0;) {
    const Eigen::Index t = reverse ? N - 1 - step : step;
    const Eigen::Index tp = reverse ? t + 1 : t - 1;
    const bool has_prev = step > 0;
    const auto gates = trace.gates.col(t);
    const auto i = gates.segment(0, H).array();
    const auto f = gates.segment(H, H).array();
    const auto o = gates.segment(2 * H, H).array();
    const auto g = gates.segment(3 * H, H).array();

    const Vector dh = d_hiddens.col(t) + dh_next;
    tc = trace.cells.col(t).array().tanh().matrix();
    dc = (dh.array() * o * (1.0 - tc.array().square())).matrix() + dc_next;

    auto dz = dz_all.col(t);
    dz.segment(0, H) = (dc.array() * g * i * (1.0 - i)).matrix();
    if (has_prev) {
      dz.segment(H, H) = (dc.array() * trace.cells.col(tp).array() * f * (1.0 - f)).matrix();
      h_prev.col(t) = trace.hiddens.col(tp);
    } else {
      dz.segment(H, H).setZero();
      h_prev.col(t).setZero();
    }
    dz.segment(2 * H, H) = (dh.array() * tc.array() * o * (1.0 - o)).matrix();
    dz.segment(3 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();

    dc_next = (dc.array() * f).matrix();
    dh_next.noalias() = params.w_h.transpose() * dz;
  }
  grad.w_x.noalias() += dz_all * inputs.transpose();
  grad.w_h.noalias() += dz_all * h_prev.transpose();
  grad.b += dz_all.rowwise().sum();
  d_inputs.noalias() += params.w_x.transpose() * dz_all;
}

BiLstmTrace bilstm_forward(const BiLstmParams& params, const Matrix& inputs, bool residual) {
  BiLstmTrace tr;
  tr.input = inputs;
  tr.fwd = lstm_forward(params.fwd, inputs, false);
  tr.bwd = lstm_forward(params.bwd, inputs, true);
  const int H = params.fwd.hidden();
  tr.output.resize(2 * H, inputs.cols());
  tr.output.topRows(H) = tr.fwd.hiddens;
  tr.output.bottomRows(H) = tr.bwd.hiddens;
  if (residual) {
    if (inputs.rows() != 2 * H) throw PreconditionError("residual layer needs input width == 2 * hidden");
    tr.output += inputs;
  }
  return tr;
}

Matrix bilstm_backward(const BiLstmParams& params, const BiLstmTrace& trace,
                       const Matrix& d_output, bool residual, BiLstmParams& grad) {
  const int H = params.fwd.hidden();
  Matrix d_inputs;
  if (residual)
    d_inputs = d_output;
  else
    d_inputs.setZero(trace.input.rows(), trace.input.cols());
  lstm_backward(params.fwd, trace.input, false, trace.fwd, d_output.topRows(H), grad.fwd, d_inputs);
  lstm_backward(params.bwd, trace.input, true, trace.bwd, d_output.bottomRows(H), grad.bwd, d_inputs);
  return d_inputs;
}

Matrix bilstm_stack_forward(const std::vector<BiLstmParams>& stack, const Matrix& inputs) {
  return run_stack(stack, inputs, nullptr);
}

std::array<std::pair<int, int>, kQueryVectors> pooling_ranges(int length) {
  if (length < 1) throw PreconditionError("pooling needs a non-empty query");
  const int M = length;
  int mid_lo = ceil_div(M, 4) + 1;
  int mid_hi = std::clamp(ceil_div(3 * M, 4), 1, M);
  mid_lo = std::clamp(mid_lo, 1, mid_hi);
  return {{{1, ceil_div(M, 2)}, {mid_lo, mid_hi}, {M / 2 + 1, M}}};
}

Matrix segment_inputs(const ModelParams& params, const std::vector<SegmentFeatures>& features) {
  const auto& cfg = params.config;
  const int V = static_cast<int>(params.vocab.size());
  const int E = cfg.cn_embed_dim;
  Matrix x(cfg.segment_feature_dim(), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    x(0, col) = features[i].duration_s;
    for (int k = 0; k < kTopGraphemes; ++k) {
      const auto [id, prob] = features[i].top[static_cast<std::size_t>(k)];
      if (id != kNullGrapheme && (id < 0 || id >= V))
        throw PreconditionError(fmt::format("segment {}: grapheme id {} outside the model vocabulary", i + 1, id));
      const int emb_col = id == kNullGrapheme ? V : id;
      x.block(1 + k * (E + 1), col, E, 1) = params.cn_embedding.col(emb_col);
      x(1 + k * (E + 1) + E, col) = prob;
    }
  }
  return x;
}

DocumentPass forward_document(const ModelParams& params, const std::vector<SegmentFeatures>& features) {
  DocumentPass pass;
  pass.features = segment_inputs(params, features);
  const int V = static_cast<int>(params.vocab.size());
  pass.embedding_columns.reserve(features.size());
  for (const auto& f : features) {
    std::array<int, kTopGraphemes> cols{};
    for (int k = 0; k < kTopGraphemes; ++k) {
      const int id = f.top[static_cast<std::size_t>(k)].first;
      cols[static_cast<std::size_t>(k)] = id == kNullGrapheme ? V : id;
    }
    pass.embedding_columns.push_back(cols);
  }
  Matrix projected = params.cn_proj_w * pass.features;
  projected.colwise() += params.cn_proj_b.col(0);
  pass.embeddings = run_stack(params.cn_stack, projected, &pass.layers);
  return pass;
}

void backward_document(const ModelParams& params, const DocumentPass& pass,
                       const Matrix& d_embeddings, ModelParams& grad) {
  if (pass.features.cols() == 0) return;
  const Matrix d_proj = backprop_stack(params.cn_stack, pass.layers, d_embeddings, grad.cn_stack);
  grad.cn_proj_w.noalias() += d_proj * pass.features.transpose();
  grad.cn_proj_b += d_proj.rowwise().sum();
  const Matrix d_features = params.cn_proj_w.transpose() * d_proj;
  const int E = params.config.cn_embed_dim;
  for (std::size_t i = 0; i < pass.embedding_columns.size(); ++i) {
    for (int k = 0; k < kTopGraphemes; ++k) {
      grad.cn_embedding.col(pass.embedding_columns[i][static_cast<std::size_t>(k)]) +=
          d_features.block(1 + k * (E + 1), static_cast<Eigen::Index>(i), E, 1);
    }
  }
}

QueryPass forward_query(const ModelParams& params, const std::vector<int>& ids) {
  if (ids.empty()) throw PreconditionError("empty query term");
  const int V = static_cast<int>(params.vocab.size());
  const auto M = static_cast<Eigen::Index>(ids.size());
  QueryPass pass;
  pass.ids = ids;
  pass.graphemes.resize(params.config.query_embed_dim, M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const int id = ids[static_cast<std::size_t>(j)];
    if (id < 0 || id >= V) throw PreconditionError(fmt::format("query grapheme id {} outside the vocabulary", id));
    pass.graphemes.col(j) = params.query_embedding.col(id);
  }
  Matrix projected = params.query_proj_w * pass.graphemes;
  projected.colwise() += params.query_proj_b.col(0);
  pass.outputs = run_stack(params.query_stack, projected, &pass.layers);

  const auto W = pass.outputs.rows();
  pass.q.resize(W, kQueryVectors);
  pass.pool_argmax.resize(W, kQueryVectors);
  const auto ranges = pooling_ranges(static_cast<int>(M));
  for (int k = 0; k < kQueryVectors; ++k) {
    const auto [lo, hi] = ranges[static_cast<std::size_t>(k)];
    for (Eigen::Index r = 0; r < W; ++r) {
      int best = lo - 1;
      for (int j = lo; j < hi; ++j)
        if (pass.outputs(r, j) > pass.outputs(r, best)) best = j;
      pass.q(r, k) = pass.outputs(r, best);
      pass.pool_argmax(r, k) = best;
    }
  }

  pass.minlen = bilstm_forward(params.minlen_lstm, pass.graphemes, /*residual=*/false);
  const int U = params.config.minlen_units;
  Vector summary(2 * U);
  summary.head(U) = pass.minlen.fwd.hiddens.col(M - 1);
  summary.tail(U) = pass.minlen.bwd.hiddens.col(0);
  pass.min_len_raw = (params.minlen_w * summary)(0, 0) + params.minlen_b(0, 0);
  return pass;
}

void backward_query(const ModelParams& params, const QueryPass& pass, const Matrix& d_q,
                    double d_min_len_raw, ModelParams& grad) {
  const auto M = pass.outputs.cols();
  Matrix d_outputs = Matrix::Zero(pass.outputs.rows(), M);
  for (int k = 0; k < kQueryVectors; ++k)
    for (Eigen::Index r = 0; r < d_outputs.rows(); ++r)
      d_outputs(r, pass.pool_argmax(r, k)) += d_q(r, k);
  const Matrix d_proj = backprop_stack(params.query_stack, pass.layers, d_outputs, grad.query_stack);
  grad.query_proj_w.noalias() += d_proj * pass.graphemes.transpose();
  grad.query_proj_b += d_proj.rowwise().sum();
  Matrix d_graphemes = params.query_proj_w.transpose() * d_proj;

  if (d_min_len_raw != 0.0) {
    const int U = params.config.minlen_units;
    Vector summary(2 * U);
    summary.head(U) = pass.minlen.fwd.hiddens.col(M - 1);
    summary.tail(U) = pass.minlen.bwd.hiddens.col(0);
    grad.minlen_w += d_min_len_raw * summary.transpose();
    grad.minlen_b(0, 0) += d_min_len_raw;
    const Vector d_summary = params.minlen_w.transpose() * d_min_len_raw;
    Matrix d_hidden = Matrix::Zero(2 * U, M);
    d_hidden.block(0, M - 1, U, 1) = d_summary.head(U);
    d_hidden.block(U, 0, U, 1) = d_summary.tail(U);
    d_graphemes += bilstm_backward(params.minlen_lstm, pass.minlen, d_hidden, /*residual=*/false,
                                   grad.minlen_lstm);
  }
  for (Eigen::Index j = 0; j < M; ++j)
    grad.query_embedding.col(pass.ids[static_cast<std::size_t>(j)]) += d_graphemes.col(j);
}

Matrix project_document(const ModelParams& params, const std::vector<SegmentFeatures>& features) {
  Matrix projected = params.cn_proj_w * segment_inputs(params, features);
  projected.colwise() += params.cn_proj_b.col(0);
  return run_stack(params.cn_stack, projected, nullptr);
}

QueryProjection project_query(const ModelParams& params, const std::vector<int>& ids) {
  auto pass = forward_query(params, ids);
  return {std::move(pass.q), std::max(0.0, pass.min_len_raw)};
}

QueryProjection project_query(const ModelParams& params, const std::string& term) {
  return project_query(params, params.tokenize(term));
}

ScorePass score_forward(const Matrix& embeddings, const Matrix& q, double alpha, double beta) {
  if (embeddings.rows() != q.rows() || q.cols() != kQueryVectors)
    throw PreconditionError("score: embedding/query shape mismatch");
  ScorePass pass;
  pass.dots.noalias() = q.transpose() * embeddings;
  const auto N = embeddings.cols();
  pass.best.resize(static_cast<std::size_t>(N));
  pass.max_dot.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    int k_best = 0;
    for (int k = 1; k < kQueryVectors; ++k)
      if (pass.dots(k, i) > pass.dots(k_best, i)) k_best = k;
    pass.best[static_cast<std::size_t>(i)] = k_best;
    pass.max_dot(i) = pass.dots(k_best, i);
  }
  pass.logits = (alpha * pass.max_dot).array() + beta;
  pass.probs = pass.logits.unaryExpr([](double z) { return sigmoid(z); });
  return pass;
}

void score_backward(const Matrix& embeddings, const Matrix& q, double alpha, const ScorePass& pass,
                    const Vector& d_logits, Matrix& d_embeddings, Matrix& d_q, double& d_alpha,
                    double& d_beta) {
  d_embeddings.setZero(embeddings.rows(), embeddings.cols());
  d_q.setZero(q.rows(), q.cols());
  d_alpha = d_logits.dot(pass.max_dot);
  d_beta = d_logits.sum();
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i) {
    const double d_max = alpha * d_logits(i);
    if (d_max == 0.0) continue;
    const int k = pass.best[static_cast<std::size_t>(i)];
    d_embeddings.col(i) = d_max * q.col(k);
    d_q.col(k) += d_max * embeddings.col(i);
  }
}

Vector score_segments(const Matrix& embeddings, const Matrix& q, double alpha, double beta) {
  return score_forward(embeddings, q, alpha, beta).probs;
}

GradientCheckResult gradient_check(ModelParams params, const LossFunction& loss, double perturbation) {
  ModelParams grad = zeros_like(params);
  const double base = loss(params, &grad);
  if (!std::isfinite(base)) throw Error("gradient check: non-finite loss");

  std::vector<const Matrix*> grads;
  grad.for_each_tensor([&](const std::string&, const Matrix& m) { grads.push_back(&m); });

  std::vector<std::pair<std::string, Matrix*>> tensors;
  params.for_each_tensor([&](const std::string& name, Matrix& m) { tensors.emplace_back(name, &m); });

  GradientCheckResult result;
  for (std::size_t n = 0; n < tensors.size(); ++n) {
    Matrix& m = *tensors[n].second;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + perturbation;
      const double up = loss(params, nullptr);
      m.data()[i] = saved - perturbation;
      const double down = loss(params, nullptr);
      m.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw Error("gradient check: non-finite loss");
      const double numeric = (up - down) / (2.0 * perturbation);
      const double analytic = grads[n]->data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.num_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = tensors[n].first;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gcnstd
