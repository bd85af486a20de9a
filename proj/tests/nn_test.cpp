// tests/nn_test.cpp

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

#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "gcnstd/checkpoint.hpp"
#include "gcnstd/nn.hpp"
#include "gcnstd/train.hpp"
#include "test_util.hpp"

namespace gcnstd {
namespace {

using Vec = std::vector<double>;

// ---- independent plain-loop transcription of the LSTM equations ----------

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec matvec(const Matrix& w, const Vec& x) {
  Vec y(static_cast<std::size_t>(w.rows()), 0.0);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) y[static_cast<std::size_t>(r)] += w(r, c) * x[static_cast<std::size_t>(c)];
  return y;
}

// Gates stacked as input, forget, output, candidate.
void oracle_cell(const LstmParams& p, const Vec& x, Vec& h, Vec& c) {
  const std::size_t H = h.size();
  const Vec zx = matvec(p.w_x, x), zh = matvec(p.w_h, h);
  Vec h2(H), c2(H);
  for (std::size_t j = 0; j < H; ++j) {
    auto z = [&](std::size_t gate) {
      const std::size_t r = gate * H + j;
      return zx[r] + zh[r] + p.b(static_cast<Eigen::Index>(r), 0);
    };
    const double i = sig(z(0)), f = sig(z(1)), o = sig(z(2)), g = std::tanh(z(3));
    c2[j] = f * c[j] + i * g;
    h2[j] = o * std::tanh(c2[j]);
  }
  h = h2;
  c = c2;
}

std::vector<Vec> columns(const Matrix& m) {
  std::vector<Vec> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(t)].push_back(m(r, t));
  return out;
}

std::vector<Vec> oracle_direction(const LstmParams& p, const std::vector<Vec>& xs, bool reverse) {
  const auto H = static_cast<std::size_t>(p.w_h.cols());
  Vec h(H, 0.0), c(H, 0.0);
  std::vector<Vec> out(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t t = reverse ? xs.size() - 1 - k : k;
    oracle_cell(p, xs[t], h, c);
    out[t] = h;
  }
  return out;
}

std::vector<Vec> oracle_stack(const std::vector<BiLstmParams>& stack, std::vector<Vec> xs) {
  for (const auto& layer : stack) {
    const auto f = oracle_direction(layer.fwd, xs, false);
    const auto b = oracle_direction(layer.bwd, xs, true);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      Vec y = f[t];
      y.insert(y.end(), b[t].begin(), b[t].end());
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += xs[t][j];
      xs[t] = y;
    }
  }
  return xs;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

LstmParams random_lstm(std::mt19937_64& rng, int in, int H) {
  return {random_matrix(rng, 4 * H, in), random_matrix(rng, 4 * H, H), random_matrix(rng, 4 * H, 1)};
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.width = 4;
  c.num_layers = 2;
  c.cn_embed_dim = 3;
  c.query_embed_dim = 4;
  c.minlen_units = 2;
  return c;
}

ModelParams random_model(std::uint64_t seed) {
  auto p = init_model(tiny_config(), {"a", "b", "c"}, seed);
  // Break the symmetric initial calibration so every path carries gradient.
  p.alpha(0, 0) = 1.3;
  p.beta(0, 0) = -0.2;
  return p;
}

std::vector<SegmentFeatures> random_features(std::mt19937_64& rng, int n, int vocab) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SegmentFeatures> out(static_cast<std::size_t>(n));
  for (auto& f : out) {
    f.duration_s = 0.02 * (1 + static_cast<int>(u(rng) * 6));
    double left = 1.0;
    for (int k = 0; k < kTopGraphemes; ++k) {
      const double p = k == kTopGraphemes - 1 ? left * 0.5 : left * (0.4 + 0.5 * u(rng));
      f.top[static_cast<std::size_t>(k)] = {static_cast<int>(u(rng) * vocab), p};
      left -= p;
    }
  }
  out.back().top[2] = {kNullGrapheme, 0.0};
  return out;
}

TEST(Lstm, ZeroParamsGiveZeroHidden) {
  LstmParams p{Matrix::Zero(8, 3), Matrix::Zero(8, 2), Matrix::Zero(8, 1)};
  const auto s = lstm_cell(p, Vector::Constant(3, 0.7), Vector::Zero(2), Vector::Zero(2));
  EXPECT_EQ(s.h, Vector::Zero(2));
}

TEST(Lstm, ZeroInputsZeroBiasesGiveZeroHiddens) {
  std::mt19937_64 rng(1);
  auto p = random_lstm(rng, 3, 2);
  p.b.setZero();
  const auto trace = lstm_forward(p, Matrix::Zero(3, 6), false);
  EXPECT_EQ(trace.hiddens, Matrix::Zero(2, 6));
}

TEST(Lstm, CellMatchesTranscription) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_lstm(rng, 5, 3);
    const Matrix x = random_matrix(rng, 5, 1, 2.0), h = random_matrix(rng, 3, 1), c = random_matrix(rng, 3, 1);
    const auto got = lstm_cell(p, x.col(0), h.col(0), c.col(0));
    Vec oh = columns(h)[0], oc = columns(c)[0];
    oracle_cell(p, columns(x)[0], oh, oc);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(got.h(j), oh[static_cast<std::size_t>(j)], 1e-12);
      EXPECT_NEAR(got.c(j), oc[static_cast<std::size_t>(j)], 1e-12);
    }
  }
}

TEST(Lstm, ZeroStackIsResidualIdentity) {
  std::vector<BiLstmParams> stack(3);
  for (auto& l : stack) {
    l.fwd = {Matrix::Zero(8, 4), Matrix::Zero(8, 2), Matrix::Zero(8, 1)};
    l.bwd = l.fwd;
  }
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 4, 7);
  EXPECT_EQ(bilstm_stack_forward(stack, x), x);
}

TEST(Lstm, SingleStepSeenByBothDirections) {
  std::mt19937_64 rng(4);
  BiLstmParams l{random_lstm(rng, 4, 2), random_lstm(rng, 4, 2)};
  const Matrix x = random_matrix(rng, 4, 1);
  const auto out = bilstm_forward(l, x, false);
  const auto f = lstm_cell(l.fwd, x.col(0), Vector::Zero(2), Vector::Zero(2));
  const auto b = lstm_cell(l.bwd, x.col(0), Vector::Zero(2), Vector::Zero(2));
  EXPECT_NEAR((out.output.col(0).head(2) - f.h).norm(), 0.0, 1e-15);
  EXPECT_NEAR((out.output.col(0).tail(2) - b.h).norm(), 0.0, 1e-15);
}

TEST(Lstm, StackMatchesReimplementation) {
  std::mt19937_64 rng(5);
  std::vector<BiLstmParams> stack;
  for (int l = 0; l < 3; ++l) stack.push_back({random_lstm(rng, 6, 3), random_lstm(rng, 6, 3)});
  const Matrix x = random_matrix(rng, 6, 5, 1.0);
  const Matrix got = bilstm_stack_forward(stack, x);
  const auto want = oracle_stack(stack, columns(x));
  for (int t = 0; t < 5; ++t)
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(got(j, t), want[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)], 1e-10);
}

TEST(Document, EmptyNetworkGivesEmptyEmbeddings) {
  const auto p = random_model(1);
  EXPECT_EQ(project_document(p, {}).cols(), 0);
}

TEST(Document, MatchesReimplementation) {
  std::mt19937_64 rng(6);
  const auto p = random_model(2);
  const auto feats = random_features(rng, 6, 3);
  const Matrix got = project_document(p, feats);
  const int E = p.config.cn_embed_dim;
  std::vector<Vec> xs;
  for (const auto& f : feats) {
    Vec raw = {f.duration_s};
    for (const auto& [id, prob] : f.top) {
      const int col = id == kNullGrapheme ? 3 : id;
      for (int e = 0; e < E; ++e) raw.push_back(p.cn_embedding(e, col));
      raw.push_back(prob);
    }
    Vec x = matvec(p.cn_proj_w, raw);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += p.cn_proj_b(static_cast<Eigen::Index>(j), 0);
    xs.push_back(x);
  }
  const auto want = oracle_stack(p.cn_stack, xs);
  for (int t = 0; t < 6; ++t)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(got(j, t), want[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)], 1e-10);
  EXPECT_EQ(project_document(p, feats), got);
}

TEST(Query, PoolingRanges) {
  using R = std::array<std::pair<int, int>, kQueryVectors>;
  EXPECT_EQ(pooling_ranges(1), (R{{{1, 1}, {1, 1}, {1, 1}}}));
  EXPECT_EQ(pooling_ranges(4), (R{{{1, 2}, {2, 3}, {3, 4}}}));
  EXPECT_EQ(pooling_ranges(5), (R{{{1, 3}, {3, 4}, {3, 5}}}));
  for (int m = 1; m < 40; ++m)
    for (const auto& [lo, hi] : pooling_ranges(m)) {
      EXPECT_GE(lo, 1);
      EXPECT_LE(lo, hi);
      EXPECT_LE(hi, m);
    }
}

TEST(Query, SingleGraphemePoolsTheSameVector) {
  const auto p = random_model(3);
  const auto pass = forward_query(p, {1});
  EXPECT_EQ(pass.q.col(0), pass.outputs.col(0));
  EXPECT_EQ(pass.q.col(1), pass.outputs.col(0));
  EXPECT_EQ(pass.q.col(2), pass.outputs.col(0));
}

TEST(Query, PoolingIsMaxOverRange) {
  const auto p = random_model(4);
  const auto pass = forward_query(p, {0, 1, 2, 0, 2});
  const auto ranges = pooling_ranges(5);
  for (int k = 0; k < kQueryVectors; ++k) {
    const auto [lo, hi] = ranges[static_cast<std::size_t>(k)];
    for (Eigen::Index r = 0; r < pass.outputs.rows(); ++r)
      EXPECT_EQ(pass.q(r, k), pass.outputs.row(r).segment(lo - 1, hi - lo + 1).maxCoeff());
  }
}

TEST(Query, OrderSensitive) {
  const auto p = random_model(5);
  EXPECT_GT((project_query(p, "ab").q - project_query(p, "ba").q).norm(), 1e-6);
}

TEST(Query, MinLenIsClampedAtZero) {
  auto p = random_model(6);
  p.minlen_b(0, 0) = -100.0;
  EXPECT_EQ(project_query(p, "abc").min_len, 0.0);
}

TEST(Query, TokenizeLongestMatch) {
  auto p = init_model(tiny_config(), {"a", "ab", "b"}, 1);
  EXPECT_EQ(p.tokenize("abb"), (std::vector<int>{1, 2}));
  EXPECT_EQ(p.tokenize("aab"), (std::vector<int>{0, 1}));
  EXPECT_THROW(p.tokenize("abz"), PreconditionError);
  EXPECT_THROW(p.tokenize(""), PreconditionError);
}

TEST(Score, Examples) {
  const Matrix R = Matrix::Zero(3, 4);
  const Matrix q = Matrix::Identity(3, 3);
  EXPECT_TRUE(score_segments(R, q, 1.0, 0.0).isApproxToConstant(0.5));
  std::mt19937_64 rng(7);
  const Matrix R2 = random_matrix(rng, 3, 4);
  EXPECT_TRUE(score_segments(R2, q, 0.0, 0.7).isApproxToConstant(1.0 / (1.0 + std::exp(-0.7))));
  Matrix R3(3, 1);
  R3 << 1.0, 2.0, -1.0;
  const Vector r = score_segments(R3, q, 2.0, -3.0);
  EXPECT_NEAR(r(0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(r(0), 0.7311, 1e-4);
}

// ---- gradient checking ----------------------------------------------------

TEST(GradientCheck, QuadraticIsExact) {
  const auto p0 = random_model(8);
  const LossFunction quad = [](const ModelParams& p, ModelParams* grad) {
    double loss = 0.0, k = 1.0;
    std::vector<Matrix*> gs;
    if (grad) grad->for_each_tensor([&](const std::string&, Matrix& m) { gs.push_back(&m); });
    std::size_t idx = 0;
    p.for_each_tensor([&](const std::string&, const Matrix& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        k = 0.5 + std::fmod(k * 1.37, 2.0);
        loss += 0.5 * k * m.data()[i] * m.data()[i] + 0.1 * m.data()[i];
        if (grad) gs[idx]->data()[i] += k * m.data()[i] + 0.1;
      }
      ++idx;
    });
    return loss;
  };
  const auto res = gradient_check(p0, quad);
  EXPECT_EQ(res.num_checked, p0.num_parameters());
  EXPECT_LT(res.max_rel_error, 1e-7) << res.worst_tensor;
}

TrainingChunk sample_chunk(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrainingChunk chunk;
  chunk.features = random_features(rng, 5, 3);
  chunk.query = {0, 2, 1};
  chunk.y = {0, 1, 1, 1, 0};
  chunk.w = apply_transition_masking(chunk.y, 0);
  chunk.w[0] = 0.0;
  chunk.occurrence_len = 3;
  return chunk;
}

LossFunction chunk_loss(const TrainingChunk& chunk) {
  return [chunk](const ModelParams& p, ModelParams* grad) {
    return chunk_objective(p, chunk, 0.1, 0.1, grad).total;
  };
}

TEST(GradientCheck, FullModelMaskedBceAndMinLen) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto p = random_model(seed);
    p.minlen_b(0, 0) = 1.5;  // keep min_len away from the clamp at 0
    const auto res = gradient_check(p, chunk_loss(sample_chunk(seed)));
    EXPECT_LT(res.max_rel_error, 1e-3) << res.worst_tensor << "[" << res.worst_index << "] analytic "
                                       << res.analytic << " numeric " << res.numeric;
  }
}

TEST(GradientCheck, DetectsInjectedFault) {
  auto p = random_model(14);
  p.minlen_b(0, 0) = 1.5;
  const auto base = chunk_loss(sample_chunk(14));
  const LossFunction faulty = [&](const ModelParams& q, ModelParams* grad) {
    const double loss = base(q, grad);
    if (grad) grad->cn_stack[1].bwd.w_h(2, 1) *= 1.5;
    return loss;
  };
  EXPECT_GT(gradient_check(p, faulty).max_rel_error, 1e-1);
}

// ---- checkpoints ----------------------------------------------------------

TEST(Checkpoint, RoundTripsAtFloatPrecision) {
  const auto p = random_model(15);
  const auto dir = testing::scratch_dir("checkpoint");
  save_model(p, dir / "m");
  const auto back = load_model(dir / "m");
  EXPECT_EQ(back.config, p.config);
  EXPECT_EQ(back.vocab, p.vocab);
  std::vector<const Matrix*> want;
  p.for_each_tensor([&](const std::string&, const Matrix& m) { want.push_back(&m); });
  std::size_t i = 0;
  back.for_each_tensor([&](const std::string& name, const Matrix& m) {
    const Matrix rounded = want[i++]->cast<float>().cast<double>();
    EXPECT_EQ(m, rounded) << name;
  });
  // A second save of the loaded model is byte-identical.
  save_model(back, dir / "m2");
  auto slurp = [](const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "m" / "params.bin"), slurp(dir / "m2" / "params.bin"));
  EXPECT_EQ(slurp(dir / "m" / "manifest.json"), slurp(dir / "m2" / "manifest.json"));
}

TEST(Checkpoint, ShapeMismatchIsFormatError) {
  const auto dir = testing::scratch_dir("checkpoint_bad");
  save_model(random_model(16), dir);
  std::filesystem::resize_file(dir / "params.bin", 12);
  EXPECT_THROW(load_model(dir), FormatError);
}

TEST(Checkpoint, MissingDirectoryIsIoError) { EXPECT_THROW(load_model("/nonexistent/model"), IoError); }

}  // namespace
}  // namespace gcnstd
