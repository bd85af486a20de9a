// gcnstd/synth.hpp

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

#ifndef GCNSTD_SYNTH_HPP_
#define GCNSTD_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcnstd/eval.hpp"
#include "gcnstd/grid.hpp"
#include "gcnstd/train.hpp"

namespace gcnstd {

/// Knobs of the synthetic recognizer-output generator.
struct SynthConfig {
  int num_graphemes = 12;
  int lexicon_size = 50;
  int min_word_len = 3;
  int max_word_len = 10;
  int num_train_docs = 200;
  int num_dev_docs = 20;
  int num_test_docs = 20;
  int words_per_doc = 50;
  int num_terms = 20;
  double held_out_fraction = 0.1;
  int min_frames_per_grapheme = 2;
  int max_frames_per_grapheme = 6;
  int max_trailing_blank_frames = 3;
  int min_separator_frames = 1;
  int max_separator_frames = 4;
  double substitution_mass = 0.15;  // eta: chance a grapheme's frames are dominated by a confusable one
  double confusion_concentration = 0.5;
  int jitter_frames = 2;
  double transcript_error_rate = 0.1;
  double frame_duration_s = 0.02;
  std::uint64_t seed = 0;

  void check() const;
  bool operator==(const SynthConfig&) const = default;
};

/// A word laid out on the frame axis: [first_frame, end_frame), 0-based,
/// covering its grapheme frames, trailing blanks and following separator.
struct SynthWord {
  std::string word;
  int first_frame = 0;
  int end_frame = 0;
};

/// What one frame of the rendered grid should look like.
struct FramePlan {
  int dominant = 0;  // vocabulary index carrying the peak mass
  int truth = 0;     // true symbol (differs from dominant on substitution)
  int confusable = 0;
};

struct SynthDocument {
  std::string doc_id;
  std::string split;  // "train", "dev" or "test"
  std::uint64_t seed = 0;
  std::vector<SynthWord> words;
  std::vector<FramePlan> frames;
  double duration_s(double frame_duration_s) const { return static_cast<double>(frames.size()) * frame_duration_s; }
};

struct SynthCorpus {
  SynthConfig config;
  Vocabulary vocab;  // blank, separator, graphemes
  std::vector<std::string> lexicon;
  std::vector<std::string> held_out;   // rendered but never in transcripts
  std::vector<std::string> terms_iv;   // query terms seen in transcripts
  std::vector<std::string> terms_oov;  // query terms that are held out
  std::vector<SynthDocument> documents;
  std::vector<WordToken> transcripts;  // training documents only
  std::vector<ReferenceOccurrence> references;  // dev and test, query terms only

  std::vector<std::string> terms() const;
  std::vector<const SynthDocument*> split(const std::string& name) const;
  double speech_seconds(const std::string& split) const;
};

SynthCorpus gen_corpus(const SynthConfig& config);

/// Deterministic (per-document seed) rendering of the frame plan into
/// posteriors; rows sum to 1 up to float rounding.
PosteriorGrid render_grid(const SynthDocument& document, const SynthConfig& config, const Vocabulary& vocab);

/// Writes grids/<doc_id>.gpg, transcripts.tsv, references_{dev,test}.tsv,
/// {train,dev,test}_docs.txt, terms*.txt, lexicon.txt and corpus_stats.json.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace gcnstd

#endif  // GCNSTD_SYNTH_HPP_
