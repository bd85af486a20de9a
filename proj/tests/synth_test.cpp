// tests/synth_test.cpp

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

#include <set>

#include <gtest/gtest.h>

#include "gcnstd/cn.hpp"
#include "gcnstd/synth.hpp"
#include "gcnstd/train.hpp"
#include "test_util.hpp"

namespace gcnstd {
namespace {

SynthConfig small(std::uint64_t seed = 1) {
  SynthConfig c;
  c.num_train_docs = 8;
  c.num_dev_docs = 3;
  c.num_test_docs = 3;
  c.words_per_doc = 20;
  c.seed = seed;
  return c;
}

GraphemeConfusionNetwork decode(const SynthCorpus& corpus, const SynthDocument& doc) {
  return build_confusion_network(merge_separator_into_blank(render_grid(doc, corpus.config, corpus.vocab)));
}

TEST(Synth, DeterministicFromSeed) {
  const auto a = gen_corpus(small(3));
  const auto b = gen_corpus(small(3));
  EXPECT_EQ(a.lexicon, b.lexicon);
  EXPECT_EQ(a.terms(), b.terms());
  EXPECT_EQ(a.transcripts, b.transcripts);
  EXPECT_EQ(a.references, b.references);
  ASSERT_EQ(a.documents.size(), b.documents.size());
  for (std::size_t i = 0; i < a.documents.size(); ++i)
    EXPECT_EQ(render_grid(a.documents[i], a.config, a.vocab), render_grid(b.documents[i], b.config, b.vocab));
  EXPECT_NE(gen_corpus(small(4)).lexicon, a.lexicon);
}

TEST(Synth, DefaultTermSets) {
  const auto c = gen_corpus(small());
  EXPECT_EQ(c.lexicon.size(), 50u);
  EXPECT_EQ(c.held_out.size(), 5u);
  EXPECT_EQ(c.terms_oov.size(), 5u);
  EXPECT_EQ(c.terms().size(), 20u);
  for (const auto& w : c.lexicon) {
    EXPECT_GE(w.size(), 3u);
    EXPECT_LE(w.size(), 10u);
  }
}

TEST(Synth, NoHeldOutWhenFractionIsZero) {
  auto cfg = small();
  cfg.held_out_fraction = 0.0;
  const auto c = gen_corpus(cfg);
  EXPECT_TRUE(c.terms_oov.empty());
  EXPECT_EQ(c.terms_iv.size(), 20u);
}

TEST(Synth, HeldOutWordsNeverInTranscripts) {
  const auto c = gen_corpus(small());
  const std::set<std::string> held(c.held_out.begin(), c.held_out.end());
  for (const auto& t : c.transcripts) EXPECT_FALSE(held.count(t.word)) << t.word;
  for (const auto& t : c.transcripts) EXPECT_EQ(t.doc_id.rfind("train_", 0), 0u);
}

TEST(Synth, ReferencesInsideDocuments) {
  const auto c = gen_corpus(small());
  std::map<std::string, double> duration;
  for (const auto& d : c.documents) duration[d.doc_id] = d.duration_s(c.config.frame_duration_s);
  ASSERT_FALSE(c.references.empty());
  for (const auto& r : c.references) {
    EXPECT_GE(r.t_begin, 0.0);
    EXPECT_LE(r.t_end, duration.at(r.doc_id) + 1e-9);
    EXPECT_LT(r.t_begin, r.t_end);
  }
}

TEST(Synth, RowsAreDistributions) {
  const auto c = gen_corpus(small());
  for (const auto* d : c.split("dev")) EXPECT_TRUE(validate(render_grid(*d, c.config, c.vocab)).empty());
}

TEST(Synth, NoiselessRoundTrip) {
  auto cfg = small(9);
  cfg.substitution_mass = 0.0;
  cfg.jitter_frames = 0;
  const auto c = gen_corpus(cfg);
  for (const auto& d : c.documents) {
    std::string text, decoded;
    for (const auto& w : d.words) text += w.word;
    const auto grid = merge_separator_into_blank(render_grid(d, cfg, c.vocab));
    for (int s : ctc_one_best(grid).hypothesis) decoded += grid.vocab.symbols[static_cast<std::size_t>(s)];
    EXPECT_EQ(decoded, text) << d.doc_id;
  }
}

TEST(Synth, TopOneErrorRateInBand) {
  auto cfg = small(10);
  cfg.num_train_docs = 80;
  const auto c = gen_corpus(cfg);
  int graphemes = 0, errors = 0;
  for (const auto* d : c.split("train")) {
    const auto cnet = decode(c, *d);
    std::vector<int> segment_of(d->frames.size() + 2, -1);
    for (int i = 0; i < cnet.size(); ++i)
      for (int t = cnet.alignments[static_cast<std::size_t>(i)].b; t < cnet.alignments[static_cast<std::size_t>(i)].e; ++t)
        segment_of[static_cast<std::size_t>(t)] = i;
    for (std::size_t t = 0; t < d->frames.size(); ++t) {
      const auto& f = d->frames[t];
      const bool starts = f.truth >= 2 && (t == 0 || d->frames[t - 1].truth != f.truth || d->frames[t - 1].dominant < 2);
      if (!starts) continue;
      ++graphemes;
      const int seg = segment_of[t + 1];
      const std::string truth = c.vocab.symbols[static_cast<std::size_t>(f.truth)];
      if (seg < 0 || cnet.vocab[static_cast<std::size_t>(cnet.segments[static_cast<std::size_t>(seg)].dist[0].first)] != truth)
        ++errors;
    }
  }
  ASSERT_GE(graphemes, 10000);
  const double rate = static_cast<double>(errors) / graphemes;
  RecordProperty("top1_error_rate", std::to_string(rate));
  EXPECT_GE(rate, 0.05);
  EXPECT_LE(rate, 0.35);
}

std::vector<double> true_target(const GraphemeConfusionNetwork& cnet, const SynthWord& w, double dt) {
  return build_target(cnet, w.first_frame * dt, w.end_frame * dt);
}

TEST(Synth, NoiselessTargetsCoverExactlyTheWordGraphemes) {
  auto cfg = small(11);
  cfg.substitution_mass = 0.0;
  cfg.jitter_frames = 0;
  cfg.held_out_fraction = 0.0;
  cfg.transcript_error_rate = 0.0;
  const auto c = gen_corpus(cfg);
  std::size_t k = 0;
  for (const auto* d : c.split("train")) {
    const auto cnet = decode(c, *d);
    for (const auto& w : d->words) {
      const auto& tok = c.transcripts[k++];
      ASSERT_EQ(tok.word, w.word);
      const auto y = build_target(cnet, tok.t_begin, tok.t_end);
      int ones = 0, runs = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        ones += y[i] == 1.0;
        runs += y[i] == 1.0 && (i == 0 || y[i - 1] == 0.0);
      }
      EXPECT_EQ(ones, static_cast<int>(w.word.size())) << w.word;
      EXPECT_EQ(runs, 1);
    }
  }
}

TEST(Synth, JitteredBoundariesStayWithinTwoSegments) {
  auto cfg = small(12);
  cfg.jitter_frames = 2;
  cfg.held_out_fraction = 0.0;
  cfg.transcript_error_rate = 0.0;
  const auto c = gen_corpus(cfg);
  std::size_t k = 0;
  auto bounds = [](const std::vector<double>& y) {
    int first = -1, last = -1;
    for (int i = 0; i < static_cast<int>(y.size()); ++i)
      if (y[static_cast<std::size_t>(i)] == 1.0) {
        if (first < 0) first = i;
        last = i;
      }
    return std::pair{first, last};
  };
  int max_dev = 0;
  for (const auto* d : c.split("train")) {
    const auto cnet = decode(c, *d);
    for (const auto& w : d->words) {
      const auto& tok = c.transcripts[k++];
      const auto [f0, l0] = bounds(true_target(cnet, w, cfg.frame_duration_s));
      const auto [f1, l1] = bounds(build_target(cnet, tok.t_begin, tok.t_end));
      if (f0 < 0 || f1 < 0) continue;
      max_dev = std::max({max_dev, std::abs(f0 - f1), std::abs(l0 - l1)});
    }
  }
  EXPECT_LE(max_dev, 2);
}

TEST(Synth, WrittenCorpusLoadsBack) {
  const auto c = gen_corpus(small(13));
  const auto dir = testing::scratch_dir("synth_out");
  write_corpus(c, dir);
  EXPECT_EQ(load_transcripts(dir / "transcripts.tsv"), c.transcripts);
  const auto dev = load_references(dir / "references_dev.tsv");
  const auto test = load_references(dir / "references_test.tsv");
  EXPECT_EQ(dev.size() + test.size(), c.references.size());
  const auto g = load_grid(dir / "grids" / "dev_0000.gpg");
  EXPECT_EQ(g, render_grid(*c.split("dev")[0], c.config, c.vocab));
  EXPECT_TRUE(std::filesystem::exists(dir / "corpus_stats.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "terms_oov.txt"));
}

TEST(Synth, ConfigValidation) {
  SynthConfig c;
  c.substitution_mass = 1.0;
  EXPECT_THROW(c.check(), PreconditionError);
  c = SynthConfig{};
  c.words_per_doc = 0;
  EXPECT_THROW(c.check(), PreconditionError);
  c = SynthConfig{};
  c.min_separator_frames = 0;
  EXPECT_THROW(c.check(), PreconditionError);
}

}  // namespace
}  // namespace gcnstd
