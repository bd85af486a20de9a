// tests/cn_test.cpp

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

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gcnstd/cn.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace gcnstd {
namespace {

using testing::book_grid;
using testing::letters_vocab;
using testing::peaked_grid;

using testing::oracle_network;

int column_of(const PosteriorGrid& g, const std::string& grapheme) { return g.vocab.find(grapheme); }

void expect_matches_oracle(const PosteriorGrid& g) {
  const auto oracle = oracle_network(g);
  const auto cnet = build_confusion_network(g);
  const auto best = ctc_one_best(g);
  ASSERT_EQ(cnet.size(), static_cast<int>(oracle.size()));
  ASSERT_EQ(best.hypothesis.size(), oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    EXPECT_EQ(cnet.alignments[i].b, oracle[i].b);
    EXPECT_EQ(cnet.alignments[i].e, oracle[i].e);
    EXPECT_EQ(best.hypothesis[i], oracle[i].symbol);
    EXPECT_EQ(best.grapheme_end[i], oracle[i].d);
    ASSERT_EQ(cnet.segments[i].dist.size(), oracle[i].posterior.size());
    for (const auto& [id, p] : cnet.segments[i].dist) {
      const int col = column_of(g, cnet.vocab[static_cast<std::size_t>(id)]);
      EXPECT_NEAR(p, oracle[i].posterior.at(col), 1e-9);
    }
  }
}

TEST(OneBest, BookExample) {
  const auto best = ctc_one_best(book_grid());
  EXPECT_EQ(best.hypothesis, (std::vector<int>{1, 2, 2, 3}));
  EXPECT_EQ(best.grapheme_end, (std::vector<int>{3, 6, 8, 10}));
  const std::vector<SegmentAlignment> expected = {{1, 4}, {4, 7}, {7, 8}, {8, 10}};
  EXPECT_EQ(best.alignment, expected);
}

TEST(OneBest, AllBlank) {
  const auto g = peaked_grid(letters_vocab(2), {0, 0, 0, 0});
  const auto best = ctc_one_best(g);
  EXPECT_TRUE(best.hypothesis.empty());
  EXPECT_TRUE(best.alignment.empty());
  EXPECT_EQ(build_confusion_network(g).size(), 0);
}

TEST(OneBest, LeadingBlanksAreNotPartOfAnySegment) {
  const auto g = peaked_grid(letters_vocab(2), {0, 0, 1, 1, 0, 2});
  const auto best = ctc_one_best(g);
  const std::vector<SegmentAlignment> expected = {{3, 6}, {6, 7}};
  EXPECT_EQ(best.alignment, expected);
}

TEST(OneBest, TiesGoToLowestIndex) {
  PosteriorGrid g;
  g.vocab = letters_vocab(2);
  g.probs.resize(1, 3);
  g.probs << 0.2f, 0.4f, 0.4f;
  EXPECT_EQ(ctc_one_best(g).hypothesis, std::vector<int>{1});
}

TEST(OneBest, SeparatorMustBeMergedFirst) {
  const auto g = peaked_grid(letters_vocab(2, true), {2, 1, 3});
  EXPECT_THROW(ctc_one_best(g), PreconditionError);
  EXPECT_NO_THROW(build_confusion_network(merge_separator_into_blank(g)));
}

TEST(ConfusionNetwork, SingleSegmentAllMassOnA) {
  PosteriorGrid g;
  g.vocab = letters_vocab(2);
  g.probs.resize(2, 3);
  g.probs << 0.2f, 0.8f, 0.0f, 0.6f, 0.4f, 0.0f;
  const auto cnet = build_confusion_network(g);
  ASSERT_EQ(cnet.size(), 1);
  EXPECT_EQ(cnet.segments[0].dist[0], (std::pair<int, double>{0, 1.0}));
}

TEST(ConfusionNetwork, TwoFrameHandExample) {
  PosteriorGrid g;
  g.vocab = letters_vocab(2);
  g.probs.resize(2, 3);
  g.probs << 0.25f, 0.5f, 0.25f, 0.0f, 0.5f, 0.5f;
  // Frame 1 argmax is "a", so both frames form one segment.
  const auto cnet = build_confusion_network(g);
  ASSERT_EQ(cnet.size(), 1);
  EXPECT_NEAR(cnet.segments[0].dist[0].second, 1.0 / 1.75, 1e-12);
  EXPECT_NEAR(cnet.segments[0].dist[1].second, 0.75 / 1.75, 1e-12);
}

TEST(ConfusionNetwork, HandEvaluatedPosteriors) {
  PosteriorGrid g;
  g.vocab = letters_vocab(2);
  g.probs.resize(2, 3);
  g.probs << 0.5f, 0.3f, 0.2f, 0.0f, 0.5f, 0.5f;
  const auto seg = segment_distribution(g, {1, 3});
  ASSERT_EQ(seg.dist.size(), 2u);
  EXPECT_EQ(seg.dist[0].first, 0);
  EXPECT_NEAR(seg.dist[0].second, 0.8 / 1.5, 1e-7);
  EXPECT_NEAR(seg.dist[1].second, 0.7 / 1.5, 1e-7);
  EXPECT_NEAR(seg.dist[0].second, 0.5333, 1e-4);
}

TEST(ConfusionNetwork, ZeroMassSegmentIsRejected) {
  PosteriorGrid g;
  g.vocab = letters_vocab(1);
  g.probs.resize(1, 2);
  g.probs << 1.0f, 0.0f;
  EXPECT_THROW(segment_distribution(g, {1, 2}), ValidationError);
}

TEST(ConfusionNetwork, BookMatchesOracle) { expect_matches_oracle(book_grid()); }

TEST(ConfusionNetwork, RandomGridsMatchOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> frames(0, 30), graphemes(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = testing::random_grid(rng, frames(rng), letters_vocab(graphemes(rng)), trial % 5 != 0);
    expect_matches_oracle(g);
  }
}

TEST(ConfusionNetwork, SegmentsAreDistributions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cnet = build_confusion_network(testing::random_grid(rng, 40, letters_vocab(6)));
    for (int i = 0; i < cnet.size(); ++i) {
      double sum = 0.0;
      const auto& dist = cnet.segments[static_cast<std::size_t>(i)].dist;
      for (std::size_t k = 0; k < dist.size(); ++k) {
        sum += dist[k].second;
        if (k > 0) EXPECT_GE(dist[k - 1].second, dist[k].second);
      }
      EXPECT_NEAR(sum, 1.0, 1e-4);
      if (i > 0) EXPECT_EQ(cnet.alignments[static_cast<std::size_t>(i)].b, cnet.alignments[static_cast<std::size_t>(i - 1)].e);
    }
    if (cnet.size() > 0) EXPECT_EQ(cnet.alignments.back().e, 41);
  }
}

TEST(ConfusionNetwork, SegmentTimes) {
  auto cnet = build_confusion_network(book_grid());
  cnet.frame_duration_s = 0.02;
  const auto [b, e] = cnet.segment_time(1);
  EXPECT_NEAR(b, 0.06, 1e-12);
  EXPECT_NEAR(e, 0.12, 1e-12);
}

TEST(Windows, Examples) {
  EXPECT_EQ(window_spans(1650), (std::vector<FrameSpan>{{0, 900}, {750, 900}}));
  EXPECT_EQ(window_spans(900), (std::vector<FrameSpan>{{0, 900}}));
  EXPECT_TRUE(window_spans(0).empty());
  EXPECT_EQ(window_spans(1000), (std::vector<FrameSpan>{{0, 900}, {750, 250}}));
  EXPECT_THROW(window_spans(100, 900, 151), PreconditionError);
  EXPECT_THROW(window_spans(100, 150, 150), PreconditionError);
}

TEST(Windows, SpansCoverEverything) {
  for (int total : {1, 899, 901, 1649, 1651, 2400, 5000}) {
    const auto spans = window_spans(total);
    EXPECT_EQ(spans.front().start, 0);
    EXPECT_EQ(spans.back().start + spans.back().length, total);
    for (std::size_t k = 1; k < spans.size(); ++k)
      EXPECT_EQ(spans[k - 1].start + spans[k - 1].length - spans[k].start, 150);
  }
}

TEST(Stitch, OverlapHalves) {
  PosteriorGrid left, right;
  left.vocab = right.vocab = letters_vocab(1);
  left.probs = ProbMatrix::Constant(900, 2, 0.5f);
  left.probs.col(0).setConstant(0.25f);
  left.probs.col(1).setConstant(0.75f);
  right.probs = ProbMatrix::Constant(900, 2, 0.5f);
  const auto out = stitch({left, right}, {{0, 900}, {750, 900}});
  ASSERT_EQ(out.num_frames(), 1650);
  for (int t = 751; t <= 825; ++t) EXPECT_EQ(out.at(t, 0), 0.25f) << t;
  for (int t = 826; t <= 900; ++t) EXPECT_EQ(out.at(t, 0), 0.5f) << t;
}

TEST(Stitch, SingleWindowIsIdentity) {
  std::mt19937_64 rng(8);
  const auto g = testing::random_grid(rng, 300, letters_vocab(4));
  EXPECT_EQ(stitch({g}, {{0, 300}}), g);
}

TEST(Stitch, SplitThenStitchIsIdentity) {
  std::mt19937_64 rng(9);
  for (int total : {1, 900, 1650, 2000, 3333}) {
    auto g = testing::random_grid(rng, total, letters_vocab(3));
    g.frame_duration_s = 0.02;
    const auto spans = window_spans(total);
    EXPECT_EQ(stitch(split_grid(g, spans), spans), g);
  }
}

TEST(Stitch, Rejections) {
  std::mt19937_64 rng(10);
  const auto g = testing::random_grid(rng, 1650, letters_vocab(3));
  const auto spans = window_spans(1650);
  auto windows = split_grid(g, spans);
  auto bad = windows;
  bad[1].vocab.symbols[1] = "z";
  EXPECT_THROW(stitch(bad, spans), PreconditionError);
  bad = windows;
  bad[1].frame_duration_s = 0.01;
  EXPECT_THROW(stitch(bad, spans), PreconditionError);
  EXPECT_THROW(stitch(windows, {{0, 900}, {751, 899}}), PreconditionError);
  EXPECT_THROW(stitch(windows, {{0, 900}}), PreconditionError);
  EXPECT_THROW(stitch({}, {}), PreconditionError);
}

TEST(Featurize, DirectReadOff) {
  GraphemeConfusionNetwork cnet;
  cnet.vocab = {"a", "b", "c"};
  cnet.frame_duration_s = 0.02;
  cnet.segments = {CNSegment{{{0, 0.7}, {1, 0.2}, {2, 0.1}}}};
  cnet.alignments = {{4, 7}};
  const auto f = featurize(cnet);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_NEAR(f[0].duration_s, 0.06, 1e-12);
  EXPECT_EQ(f[0].top[0], (std::pair<int, double>{0, 0.7}));
  EXPECT_EQ(f[0].top[1], (std::pair<int, double>{1, 0.2}));
  EXPECT_EQ(f[0].top[2], (std::pair<int, double>{2, 0.1}));
}

TEST(Featurize, PadsSmallVocabularies) {
  const auto cnet = build_confusion_network(peaked_grid(letters_vocab(2), {1, 1, 2}));
  const auto f = featurize(cnet);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].top[2], (std::pair<int, double>{kNullGrapheme, 0.0}));
}

TEST(Featurize, TopProbabilitiesNonIncreasing) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    for (const auto& f : featurize(build_confusion_network(testing::random_grid(rng, 50, letters_vocab(5))))) {
      EXPECT_GE(f.top[0].second, f.top[1].second);
      EXPECT_GE(f.top[1].second, f.top[2].second);
    }
  }
}

TEST(CnetJson, RoundTrip) {
  std::mt19937_64 rng(14);
  auto cnet = build_confusion_network(testing::random_grid(rng, 60, letters_vocab(5)));
  cnet.doc_id = "doc";
  const auto back = cnet_from_json_line(cnet_to_json_line(cnet));
  EXPECT_EQ(back.doc_id, "doc");
  EXPECT_EQ(back.vocab, cnet.vocab);
  EXPECT_EQ(back.alignments, cnet.alignments);
  ASSERT_EQ(back.size(), cnet.size());
  for (int i = 0; i < cnet.size(); ++i)
    EXPECT_EQ(back.segments[static_cast<std::size_t>(i)].dist, cnet.segments[static_cast<std::size_t>(i)].dist);
}

TEST(CnetJson, CorpusFileRoundTrip) {
  const auto dir = testing::scratch_dir("cnet_corpus");
  auto a = build_confusion_network(book_grid());
  a.doc_id = "book";
  GraphemeConfusionNetwork empty;
  empty.doc_id = "empty";
  empty.vocab = {"a"};
  save_cnet_corpus({a, empty}, dir / "c.jsonl");
  const auto back = load_cnet_corpus(dir / "c.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].size(), 4);
  EXPECT_EQ(back[1].size(), 0);
}

TEST(CnetJson, MalformedLine) { EXPECT_THROW(cnet_from_json_line("{\"segments\": 3"), FormatError); }

}  // namespace
}  // namespace gcnstd
