// src/synth.cpp

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

#include "gcnstd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"

namespace gcnstd {

using nlohmann::json;

namespace {

constexpr int kBlank = 0;
constexpr int kSeparator = 1;
constexpr int kFirstGrapheme = 2;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool related(const std::string& a, const std::string& b) {
  return a.find(b) != std::string::npos || b.find(a) != std::string::npos;
}

// Row-stochastic confusion over graphemes (self excluded), one row per grapheme.
class ConfusionModel {
 public:
  ConfusionModel(int n, double concentration, std::mt19937_64& rng) : rows_(static_cast<std::size_t>(n)) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    for (int g = 0; g < n; ++g) {
      auto& row = rows_[static_cast<std::size_t>(g)];
      row.resize(static_cast<std::size_t>(n));
      for (int h = 0; h < n; ++h) row[static_cast<std::size_t>(h)] = h == g ? 0.0 : gamma(rng) + 1e-12;
    }
  }
  int sample(int g, std::mt19937_64& rng) const {
    const auto& row = rows_[static_cast<std::size_t>(g)];
    return std::discrete_distribution<int>(row.begin(), row.end())(rng);
  }

 private:
  std::vector<std::vector<double>> rows_;
};

}  // namespace

void SynthConfig::check() const {
  if (num_graphemes < 2 || num_graphemes > 26) throw PreconditionError("num_graphemes must be in [2, 26]");
  if (lexicon_size < 1 || min_word_len < 1 || max_word_len < min_word_len)
    throw PreconditionError("invalid lexicon size or word length range");
  if (num_train_docs < 0 || num_dev_docs < 0 || num_test_docs < 0 || words_per_doc < 1 || num_terms < 0)
    throw PreconditionError("document and term counts must be non-negative");
  if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0))
    throw PreconditionError("held_out_fraction must be in [0, 1)");
  if (min_frames_per_grapheme < 1 || max_frames_per_grapheme < min_frames_per_grapheme)
    throw PreconditionError("invalid frames_per_grapheme range");
  if (max_trailing_blank_frames < 1) throw PreconditionError("max_trailing_blank_frames must be >= 1");
  if (min_separator_frames < 1 || max_separator_frames < min_separator_frames)
    throw PreconditionError("invalid separator frame range (minimum 1)");
  if (!(substitution_mass >= 0.0 && substitution_mass < 1.0))
    throw PreconditionError("substitution_mass must be in [0, 1)");
  if (!(confusion_concentration > 0.0)) throw PreconditionError("confusion_concentration must be positive");
  if (jitter_frames < 0) throw PreconditionError("jitter_frames must be >= 0");
  if (!(transcript_error_rate >= 0.0 && transcript_error_rate <= 1.0))
    throw PreconditionError("transcript_error_rate must be in [0, 1]");
  if (!(frame_duration_s > 0.0)) throw PreconditionError("frame_duration_s must be positive");
}

std::vector<std::string> SynthCorpus::terms() const {
  auto out = terms_iv;
  out.insert(out.end(), terms_oov.begin(), terms_oov.end());
  return out;
}

std::vector<const SynthDocument*> SynthCorpus::split(const std::string& name) const {
  std::vector<const SynthDocument*> out;
  for (const auto& d : documents)
    if (d.split == name) out.push_back(&d);
  return out;
}

double SynthCorpus::speech_seconds(const std::string& name) const {
  double total = 0.0;
  for (const auto* d : split(name)) total += d->duration_s(config.frame_duration_s);
  return total;
}

SynthCorpus gen_corpus(const SynthConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  SynthCorpus corpus;
  corpus.config = config;
  corpus.vocab.symbols = {"<eps>", "|"};
  for (int g = 0; g < config.num_graphemes; ++g) corpus.vocab.symbols.push_back(std::string(1, static_cast<char>('a' + g)));
  corpus.vocab.blank_index = kBlank;
  corpus.vocab.separator_index = kSeparator;

  const ConfusionModel confusion(config.num_graphemes, config.confusion_concentration, rng);

  // Lexicon without substring relations, so every term has a unique match.
  for (int attempts = 0; static_cast<int>(corpus.lexicon.size()) < config.lexicon_size; ++attempts) {
    if (attempts > 1000 * config.lexicon_size) throw PreconditionError("cannot build a lexicon of that size");
    const int len = uniform_int(rng, config.min_word_len, config.max_word_len);
    std::string w;
    for (int k = 0; k < len; ++k) w.push_back(static_cast<char>('a' + uniform_int(rng, 0, config.num_graphemes - 1)));
    if (std::none_of(corpus.lexicon.begin(), corpus.lexicon.end(), [&](const auto& o) { return related(o, w); }))
      corpus.lexicon.push_back(w);
  }

  std::vector<std::string> shuffled = corpus.lexicon;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto n_held = static_cast<std::size_t>(std::lround(config.held_out_fraction * config.lexicon_size));
  corpus.held_out.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::string> visible(shuffled.begin() + static_cast<std::ptrdiff_t>(n_held), shuffled.end());
  if (visible.empty()) throw PreconditionError("every lexicon word is held out");

  const auto n_terms = static_cast<std::size_t>(config.num_terms);
  corpus.terms_oov.assign(corpus.held_out.begin(), corpus.held_out.begin() + static_cast<std::ptrdiff_t>(std::min(n_held, n_terms)));
  const std::size_t n_iv = std::min(visible.size(), n_terms - corpus.terms_oov.size());
  corpus.terms_iv.assign(visible.begin(), visible.begin() + static_cast<std::ptrdiff_t>(n_iv));
  const std::set<std::string> held(corpus.held_out.begin(), corpus.held_out.end());
  const auto terms = corpus.terms();
  const std::set<std::string> term_set(terms.begin(), terms.end());

  std::uint64_t doc_counter = 0;
  const double dt = config.frame_duration_s;
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", config.num_train_docs},
                                     {"dev", config.num_dev_docs},
                                     {"test", config.num_test_docs}}) {
    for (int d = 0; d < count; ++d) {
      SynthDocument doc;
      doc.doc_id = fmt::format("{}_{:04d}", split, d);
      doc.split = split;
      doc.seed = splitmix64(config.seed ^ splitmix64(++doc_counter));
      std::mt19937_64 drng(doc.seed);

      for (int k = uniform_int(drng, 0, config.max_trailing_blank_frames); k > 0; --k)
        doc.frames.push_back({kBlank, kBlank, kFirstGrapheme});
      for (int wi = 0; wi < config.words_per_doc; ++wi) {
        const auto& word = corpus.lexicon[static_cast<std::size_t>(uniform_int(drng, 0, config.lexicon_size - 1))];
        SynthWord sw{word, static_cast<int>(doc.frames.size()), 0};
        for (std::size_t k = 0; k < word.size(); ++k) {
          const int truth = word[k] - 'a';
          int dominant = truth;
          if (std::bernoulli_distribution(config.substitution_mass)(drng)) dominant = confusion.sample(truth, drng);
          const int alternative = dominant != truth ? truth : confusion.sample(truth, drng);
          const int n = uniform_int(drng, config.min_frames_per_grapheme, config.max_frames_per_grapheme);
          for (int f = 0; f < n; ++f)
            doc.frames.push_back({kFirstGrapheme + dominant, kFirstGrapheme + truth, kFirstGrapheme + alternative});
          const bool repeat = k + 1 < word.size() && word[k + 1] == word[k];
          const int blanks = uniform_int(drng, repeat ? 1 : 0, config.max_trailing_blank_frames);
          for (int f = 0; f < blanks; ++f) doc.frames.push_back({kBlank, kBlank, kFirstGrapheme + dominant});
        }
        const int seps = uniform_int(drng, config.min_separator_frames, config.max_separator_frames);
        for (int f = 0; f < seps; ++f) doc.frames.push_back({kSeparator, kSeparator, kBlank});
        sw.end_frame = static_cast<int>(doc.frames.size());
        doc.words.push_back(std::move(sw));
      }

      const int T = static_cast<int>(doc.frames.size());
      for (const auto& w : doc.words) {
        if (split == "train") {
          WordToken tok{doc.doc_id, w.word, 0.0, 0.0, 1.0};
          const bool misrecognized = held.count(w.word) > 0 ||
                                     std::bernoulli_distribution(config.transcript_error_rate)(drng);
          if (misrecognized) {
            std::string sub;
            do {
              sub = visible[static_cast<std::size_t>(uniform_int(drng, 0, static_cast<int>(visible.size()) - 1))];
            } while (sub == w.word && visible.size() > 1);
            tok.word = sub;
            tok.confidence = uniform_real(drng, 0.2, 0.9);
          } else {
            const double u = uniform_real(drng, 0.0, 1.0);
            tok.confidence = 1.0 - 0.2 * u * u;
          }
          const int j = config.jitter_frames;
          int b = std::clamp(w.first_frame + uniform_int(drng, -j, j), 0, T - 1);
          int e = std::clamp(w.end_frame + uniform_int(drng, -j, j), b + 1, T);
          tok.t_begin = b * dt;
          tok.t_end = e * dt;
          corpus.transcripts.push_back(std::move(tok));
        } else if (term_set.count(w.word)) {
          corpus.references.push_back({doc.doc_id, w.word, w.first_frame * dt, w.end_frame * dt});
        }
      }
      corpus.documents.push_back(std::move(doc));
    }
  }
  return corpus;
}

PosteriorGrid render_grid(const SynthDocument& document, const SynthConfig& config, const Vocabulary& vocab) {
  PosteriorGrid grid;
  grid.vocab = vocab;
  grid.frame_duration_s = config.frame_duration_s;
  const int V = vocab.size();
  const auto T = static_cast<Eigen::Index>(document.frames.size());
  grid.probs.resize(T, V);
  std::mt19937_64 rng(splitmix64(document.seed ^ 0x6772696473ULL));
  std::exponential_distribution<double> spread(1.0);
  std::vector<double> row(static_cast<std::size_t>(V));
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& plan = document.frames[static_cast<std::size_t>(t)];
    const double peak = uniform_real(rng, 0.6, 0.95);
    const double rest = 1.0 - peak;
    const double alt = rest * uniform_real(rng, 0.3, 0.8);
    double noise_total = 0.0;
    for (auto& v : row) noise_total += (v = spread(rng));
    for (int s = 0; s < V; ++s) row[static_cast<std::size_t>(s)] *= (rest - alt) / noise_total;
    row[static_cast<std::size_t>(plan.dominant)] += peak;
    row[static_cast<std::size_t>(plan.confusable)] += alt;
    double sum = 0.0;
    for (double v : row) sum += v;
    for (int s = 0; s < V; ++s) grid.probs(t, s) = static_cast<float>(row[static_cast<std::size_t>(s)] / sum);
  }
  return grid;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "grids");
  std::string lists[3];
  const char* names[3] = {"train", "dev", "test"};
  for (const auto& doc : corpus.documents) {
    save_grid(render_grid(doc, corpus.config, corpus.vocab), dir / "grids" / (doc.doc_id + ".gpg"));
    for (int k = 0; k < 3; ++k)
      if (doc.split == names[k]) lists[k] += fmt::format("grids/{}.gpg\n", doc.doc_id);
  }
  for (int k = 0; k < 3; ++k) detail::write_file(dir / fmt::format("{}_docs.txt", names[k]), lists[k]);
  save_transcripts(corpus.transcripts, dir / "transcripts.tsv");
  for (const char* split : {"dev", "test"}) {
    std::vector<ReferenceOccurrence> refs;
    for (const auto& r : corpus.references)
      if (r.doc_id.rfind(std::string(split) + "_", 0) == 0) refs.push_back(r);
    save_references(refs, dir / fmt::format("references_{}.tsv", split));
  }
  auto lines = [](const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) out += w + "\n";
    return out;
  };
  detail::write_file(dir / "terms.txt", lines(corpus.terms()));
  detail::write_file(dir / "terms_iv.txt", lines(corpus.terms_iv));
  detail::write_file(dir / "terms_oov.txt", lines(corpus.terms_oov));
  detail::write_file(dir / "lexicon.txt", lines(corpus.lexicon));
  json stats = {{"vocab", corpus.vocab.symbols}};
  for (const char* split : {"train", "dev", "test"})
    stats[split] = {{"documents", corpus.split(split).size()}, {"T_speech_s", corpus.speech_seconds(split)}};
  detail::write_file(dir / "corpus_stats.json", stats.dump(2) + "\n");
}

}  // namespace gcnstd
