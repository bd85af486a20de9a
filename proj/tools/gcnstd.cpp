// tools/gcnstd.cpp

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

// gcnstd: command-line front end.
//
//   gcnstd synth  -o corpus/
//   gcnstd decode --list corpus/train_docs.txt -o train.jsonl
//   gcnstd train  --corpus train.jsonl --transcripts corpus/transcripts.tsv -o model/
//   gcnstd index  --model model/ --corpus dev.jsonl -o index/
//   gcnstd search --index index/ --model model/ --terms corpus/terms.txt -o hits.tsv
//   gcnstd eval   --hits hits.tsv --refs corpus/references_dev.tsv --stats corpus/corpus_stats.json \
//                 --split dev -o report.json
//
// Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
// 3 internal error.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "gcnstd/checkpoint.hpp"
#include "gcnstd/cn.hpp"
#include "gcnstd/config.hpp"
#include "gcnstd/eval.hpp"
#include "gcnstd/grid.hpp"
#include "gcnstd/parallel.hpp"
#include "gcnstd/search.hpp"
#include "gcnstd/synth.hpp"
#include "gcnstd/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gcnstd;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

// Removes everything a failed command wrote.
class OutputGuard {
 public:
  void file(const fs::path& path) {
    if (!fs::exists(path)) created_.push_back(path);
  }
  void directory(const fs::path& path) {
    if (!fs::exists(path)) {
      created_.push_back(path);
      fs::create_directories(path);
      return;
    }
    if (!fs::is_directory(path)) throw PreconditionError(fmt::format("{} exists and is not a directory", path.string()));
    std::set<fs::path> before;
    for (const auto& e : fs::directory_iterator(path)) before.insert(e.path());
    snapshots_.emplace_back(path, std::move(before));
  }
  void commit() { committed_ = true; }
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : created_) fs::remove_all(p, ec);
    for (const auto& [dir, before] : snapshots_) {
      if (!fs::exists(dir, ec)) continue;
      std::vector<fs::path> fresh;
      for (const auto& e : fs::directory_iterator(dir, ec))
        if (!before.count(e.path())) fresh.push_back(e.path());
      for (const auto& p : fresh) fs::remove_all(p, ec);
    }
  }

 private:
  bool committed_ = false;
  std::vector<fs::path> created_;
  std::vector<std::pair<fs::path, std::set<fs::path>>> snapshots_;
};

struct Common {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  int jobs = 0;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  sub->add_option("--jobs", common.jobs, "Worker threads (0 = all cores); results do not depend on it");
  sub->add_option_function<std::string>(
      "--seed", [&common](const std::string& v) { common.overrides.emplace_back("seed", v); }, "Run seed");
  sub->add_option_function<std::vector<std::string>>(
         "--set",
         [&common](const std::vector<std::string>& items) {
           for (const auto& item : items) {
             const auto eq = item.find('=');
             if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value");
             common.overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
           }
         },
         "Override any config key, e.g. --set train.steps=500")
      ->allow_extra_args(false);
}

// A flag that writes straight into a config key.
void add_key(CLI::App* sub, Common& common, const std::string& flag, const std::string& key,
             const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.overrides.emplace_back(key, v); },
      fmt::format("{} (config key {})", help, key));
}

RunConfig effective_config(const Common& common) {
  RunConfig config = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  for (const auto& [key, value] : common.overrides) apply_override(config, key, value);
  config.propagate_seed();
  config.check();
  std::cerr << fmt::format("seed: {}\neffective config:\n{}", config.seed, run_config_to_json(config));
  return config;
}

fs::path config_sidecar(const fs::path& output) { return fs::path(output.string() + ".config.json"); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

std::vector<fs::path> grid_inputs(const std::vector<std::string>& files, const std::string& list) {
  std::vector<fs::path> out(files.begin(), files.end());
  if (!list.empty()) {
    const fs::path base = fs::path(list).parent_path();
    for (const auto& line : read_lines(list)) out.push_back(fs::path(line).is_absolute() ? fs::path(line) : base / line);
  }
  if (out.empty()) throw PreconditionError("no input grids given");
  return out;
}

GraphemeConfusionNetwork decode_one(const fs::path& path) {
  PosteriorGrid grid = load_grid(path);
  if (grid.vocab.separator_index) grid = merge_separator_into_blank(grid);
  auto cnet = build_confusion_network(grid);
  cnet.doc_id = path.stem().string();
  return cnet;
}

void cmd_decode(const Common& common, const std::vector<std::string>& files, const std::string& list,
                const fs::path& out, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  const auto inputs = grid_inputs(files, list);
  std::vector<GraphemeConfusionNetwork> corpus(inputs.size());
  std::vector<std::string> errors(inputs.size());
  parallel_for(static_cast<int>(inputs.size()), common.jobs, [&](int i) {
    try {
      corpus[static_cast<std::size_t>(i)] = decode_one(inputs[static_cast<std::size_t>(i)]);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  std::size_t failed = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (errors[i].empty()) continue;
    ++failed;
    std::cerr << fmt::format("error: {}: {}\n", inputs[i].string(), errors[i]);
  }
  if (failed) throw FormatError(fmt::format("{} of {} grids could not be decoded", failed, inputs.size()));
  guard.file(out);
  guard.file(config_sidecar(out));
  save_cnet_corpus(corpus, out);
  save_run_config(config, config_sidecar(out));
  std::cerr << fmt::format("decoded {} grids into {}\n", corpus.size(), out.string());
}

std::vector<FrameSpan> load_spans(const fs::path& path) {
  std::vector<FrameSpan> spans;
  for (const auto& line : read_lines(path)) {
    FrameSpan s;
    std::istringstream in(line);
    if (!(in >> s.start >> s.length)) throw FormatError(fmt::format("{}: bad span line '{}'", path.string(), line));
    spans.push_back(s);
  }
  return spans;
}

void cmd_stitch(const Common& common, const std::vector<std::string>& files, const fs::path& spans_file,
                const fs::path& out, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  std::vector<PosteriorGrid> windows;
  for (const auto& f : files) windows.push_back(load_grid(f));
  const auto spans = load_spans(spans_file);
  const PosteriorGrid whole = stitch(windows, spans);
  guard.file(out);
  guard.file(config_sidecar(out));
  save_grid(whole, out);
  save_run_config(config, config_sidecar(out));
  std::cerr << fmt::format("stitched {} windows into {} frames\n", windows.size(), whole.num_frames());
}

void cmd_synth(const Common& common, const fs::path& out, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  guard.directory(out);
  const SynthCorpus corpus = gen_corpus(config.synth);
  write_corpus(corpus, out);
  save_run_config(config, out / "effective_config.json");
  std::cerr << fmt::format("wrote {} documents, {} transcript tokens, {} references to {}\n",
                           corpus.documents.size(), corpus.transcripts.size(), corpus.references.size(),
                           out.string());
}

void cmd_train(const Common& common, const fs::path& corpus_file, const fs::path& transcripts,
               const fs::path& out, int log_every, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  const auto corpus = load_cnet_corpus(corpus_file);
  const auto tokens = load_transcripts(transcripts);
  TrainOptions options;
  options.jobs = common.jobs;
  options.log_every = log_every;
  options.on_progress = [](const TrainProgress& p) {
    std::cerr << fmt::format("step {} lr {:.3g} loss {:.5f}\n", p.step, p.lr, p.loss);
  };
  const TrainResult result = train(corpus, tokens, config.train, config.model, options);
  guard.directory(out);
  save_model(result.params, out);
  save_run_config(config, out / "effective_config.json");
  std::cerr << fmt::format("trained on {} bootstrap occurrences ({} skipped chunks), final loss {:.5f}\n",
                           result.stats.num_queries, result.stats.skipped_chunks, result.stats.final_loss);
}

void cmd_index(const Common& common, const fs::path& model_dir, const fs::path& corpus_file, const fs::path& out,
               OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  const ModelParams params = load_model(model_dir);
  const Index index = build_index(params, load_cnet_corpus(corpus_file), common.jobs);
  guard.directory(out);
  save_index(index, out);
  save_run_config(config, out / "effective_config.json");
  std::cerr << fmt::format("indexed {} documents\n", index.entries.size());
}

void cmd_search(const Common& common, const fs::path& index_dir, const fs::path& model_dir,
                const fs::path& terms_file, const fs::path& out, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  const ModelParams params = load_model(model_dir);
  const Index index = load_index(index_dir);
  std::vector<Hit> hits;
  for (const auto& term : read_lines(terms_file)) {
    auto found = search(index, params, term, config.search.threshold, common.jobs);
    hits.insert(hits.end(), found.begin(), found.end());
  }
  sort_hits(hits);
  guard.file(out);
  guard.file(config_sidecar(out));
  save_hits(hits, out);
  save_run_config(config, config_sidecar(out));
  std::cerr << fmt::format("{} hits\n", hits.size());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

double speech_from_stats(const fs::path& stats_file, const std::string& split) {
  try {
    return nlohmann::json::parse(slurp(stats_file)).at(split).at("T_speech_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", stats_file.string(), e.what()));
  }
}

void cmd_eval(const Common& common, const fs::path& hits_file, const fs::path& refs_file,
              const std::string& terms_file, const std::string& stats_file, const std::string& split,
              const fs::path& out, OutputGuard& guard) {
  const RunConfig config = effective_config(common);
  double t_speech = 0.0;
  if (config.eval.t_speech_s) {
    t_speech = *config.eval.t_speech_s;
  } else if (!stats_file.empty()) {
    t_speech = speech_from_stats(stats_file, split);
  } else {
    throw PreconditionError("eval needs --t-speech or --stats");
  }
  std::optional<std::vector<std::string>> terms;
  if (!terms_file.empty()) terms = read_lines(terms_file);
  const EvalReport report = evaluate(load_hits(hits_file), load_references(refs_file), t_speech, config.eval.mode,
                                     config.eval.threshold, config.eval.beta_fa, config.eval.tolerance_s, terms);
  guard.file(out);
  guard.file(config_sidecar(out));
  const std::string text = report_to_json(report);
  {
    const fs::path partial = fs::path(out.string() + ".partial");
    std::ofstream o(partial, std::ios::binary);
    o << text;
    o.close();
    if (!o) throw IoError(fmt::format("cannot write {}", out.string()));
    fs::rename(partial, out);
  }
  save_run_config(config, config_sidecar(out));
  std::cout << fmt::format("MTWV {:.4f} at threshold {:.4f}\n", report.mtwv.mtwv, report.mtwv.best_threshold);
  if (report.atwv) std::cout << fmt::format("ATWV {:.4f} at threshold {:.4f}\n", *report.atwv, report.threshold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spoken term detection over grapheme confusion networks"};
  app.require_subcommand(1);
  std::function<void(OutputGuard&)> action;

  Common common;
  std::vector<std::string> files;
  std::string list, out, spans, corpus, transcripts, model, index, terms, hits, refs, stats, split = "dev";
  int log_every = 100;

  auto* decode = app.add_subcommand("decode", "Posterior grids to a confusion-network corpus (JSON lines)");
  add_common(decode, common);
  decode->add_option("grids", files, "GPG1 grid files");
  decode->add_option("--list", list, "File listing grid paths, relative to its own directory");
  decode->add_option("-o,--out", out, "Output corpus")->required();
  decode->callback([&] { action = [&](OutputGuard& g) { cmd_decode(common, files, list, out, g); }; });

  auto* st = app.add_subcommand("stitch", "Reassemble per-window grids");
  add_common(st, common);
  st->add_option("grids", files, "Window grid files, in order")->required();
  st->add_option("--spans", spans, "Window spans: one 'start length' pair per line")->required();
  st->add_option("-o,--out", out, "Output grid")->required();
  st->callback([&] { action = [&](OutputGuard& g) { cmd_stitch(common, files, spans, out, g); }; });

  auto* sy = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_common(sy, common);
  sy->add_option("-o,--out", out, "Output directory")->required();
  add_key(sy, common, "--train-docs", "synth.num_train_docs", "Training documents");
  add_key(sy, common, "--dev-docs", "synth.num_dev_docs", "Development documents");
  add_key(sy, common, "--test-docs", "synth.num_test_docs", "Test documents");
  add_key(sy, common, "--words-per-doc", "synth.words_per_doc", "Words per document");
  add_key(sy, common, "--substitution-mass", "synth.substitution_mass", "Grapheme substitution probability");
  add_key(sy, common, "--jitter", "synth.jitter_frames", "Transcript boundary jitter in frames");
  sy->callback([&] { action = [&](OutputGuard& g) { cmd_synth(common, out, g); }; });

  auto* tr = app.add_subcommand("train", "Train the detector");
  add_common(tr, common);
  tr->add_option("--corpus", corpus, "Confusion-network corpus")->required();
  tr->add_option("--transcripts", transcripts, "Word transcript TSV")->required();
  tr->add_option("-o,--out", out, "Model directory")->required();
  tr->add_option("--log-every", log_every, "Progress interval in steps (0 = quiet)");
  add_key(tr, common, "--steps", "train.steps", "Optimizer steps");
  add_key(tr, common, "--batch-size", "train.batch_size", "Chunks per step");
  add_key(tr, common, "--peak-lr", "train.peak_lr", "Peak learning rate");
  add_key(tr, common, "--chunk-len", "train.chunk_len", "Segments per training chunk");
  add_key(tr, common, "--masking-n", "train.masking_n", "Segments masked around each transition");
  add_key(tr, common, "--width", "model.width", "LSTM output width");
  add_key(tr, common, "--num-layers", "model.num_layers", "LSTM layers per stack");
  tr->callback([&] {
    action = [&](OutputGuard& g) { cmd_train(common, corpus, transcripts, out, log_every, g); };
  });

  auto* ix = app.add_subcommand("index", "Embed a corpus for search");
  add_common(ix, common);
  ix->add_option("--model", model, "Model directory")->required();
  ix->add_option("--corpus", corpus, "Confusion-network corpus")->required();
  ix->add_option("-o,--out", out, "Index directory")->required();
  ix->callback([&] { action = [&](OutputGuard& g) { cmd_index(common, model, corpus, out, g); }; });

  auto* se = app.add_subcommand("search", "Detect query terms");
  add_common(se, common);
  se->add_option("--index", index, "Index directory")->required();
  se->add_option("--model", model, "Model directory")->required();
  se->add_option("--terms", terms, "Query terms, one per line")->required();
  se->add_option("-o,--out", out, "Hits TSV")->required();
  add_key(se, common, "--threshold", "search.threshold", "Peak detection threshold");
  se->callback([&] { action = [&](OutputGuard& g) { cmd_search(common, index, model, terms, out, g); }; });

  auto* ev = app.add_subcommand("eval", "Score hits against references");
  add_common(ev, common);
  ev->add_option("--hits", hits, "Hits TSV")->required();
  ev->add_option("--refs", refs, "Reference TSV")->required();
  ev->add_option("--terms", terms, "Restrict to these terms");
  ev->add_option("--stats", stats, "corpus_stats.json supplying T_speech");
  ev->add_option("--split", split, "Split to read from --stats");
  ev->add_option("-o,--out", out, "Report JSON")->required();
  add_key(ev, common, "--mode", "eval.mode", "atwv or mtwv");
  add_key(ev, common, "--threshold", "eval.threshold", "Decision threshold");
  add_key(ev, common, "--t-speech", "eval.t_speech_s", "Searched speech duration in seconds");
  add_key(ev, common, "--beta", "eval.beta_fa", "False-alarm weight");
  add_key(ev, common, "--tolerance", "eval.tolerance_s", "Matching tolerance in seconds");
  ev->callback([&] {
    action = [&](OutputGuard& g) { cmd_eval(common, hits, refs, terms, stats, split, out, g); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  OutputGuard guard;
  try {
    action(guard);
    guard.commit();
    return 0;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
