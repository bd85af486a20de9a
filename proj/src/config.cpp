// src/config.cpp

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

#include "gcnstd/config.hpp"

#include <limits>
#include <set>
#include <type_traits>

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"

namespace gcnstd {

using nlohmann::ordered_json;

namespace {

template <class F>
void visit(SynthConfig& c, F&& f) {
  f("num_graphemes", c.num_graphemes);
  f("lexicon_size", c.lexicon_size);
  f("min_word_len", c.min_word_len);
  f("max_word_len", c.max_word_len);
  f("num_train_docs", c.num_train_docs);
  f("num_dev_docs", c.num_dev_docs);
  f("num_test_docs", c.num_test_docs);
  f("words_per_doc", c.words_per_doc);
  f("num_terms", c.num_terms);
  f("held_out_fraction", c.held_out_fraction);
  f("min_frames_per_grapheme", c.min_frames_per_grapheme);
  f("max_frames_per_grapheme", c.max_frames_per_grapheme);
  f("max_trailing_blank_frames", c.max_trailing_blank_frames);
  f("min_separator_frames", c.min_separator_frames);
  f("max_separator_frames", c.max_separator_frames);
  f("substitution_mass", c.substitution_mass);
  f("confusion_concentration", c.confusion_concentration);
  f("jitter_frames", c.jitter_frames);
  f("transcript_error_rate", c.transcript_error_rate);
  f("frame_duration_s", c.frame_duration_s);
}

template <class F>
void visit(ModelConfig& c, F&& f) {
  f("width", c.width);
  f("num_layers", c.num_layers);
  f("cn_embed_dim", c.cn_embed_dim);
  f("query_embed_dim", c.query_embed_dim);
  f("minlen_units", c.minlen_units);
}

template <class F>
void visit(HyperParams& c, F&& f) {
  f("masking_n", c.masking_n);
  f("steps", c.steps);
  f("batch_size", c.batch_size);
  f("peak_lr", c.peak_lr);
  f("chunk_len", c.chunk_len);
  f("negative_chunk_prob", c.negative_chunk_prob);
  f("minlen_loss_weight", c.minlen_loss_weight);
  f("pinball_tau", c.pinball_tau);
  f("confidence_threshold", c.confidence_threshold);
}

template <class F>
void visit(SearchConfig& c, F&& f) {
  f("threshold", c.threshold);
}

template <class F>
void visit(EvalConfig& c, F&& f) {
  f("mode", c.mode);
  f("threshold", c.threshold);
  f("t_speech_s", c.t_speech_s);
  f("beta_fa", c.beta_fa);
  f("tolerance_s", c.tolerance_s);
}

template <class T>
ordered_json section_to_json(T section) {
  ordered_json j = ordered_json::object();
  visit(section, [&](const char* name, auto& field) {
    using F = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<F, std::optional<double>>) {
      j[name] = field ? ordered_json(*field) : ordered_json(nullptr);
    } else {
      j[name] = field;
    }
  });
  return j;
}

template <class T>
void read_value(const ordered_json& j, const std::string& where, T& out) {
  if constexpr (std::is_same_v<T, std::optional<double>>) {
    if (j.is_null()) {
      out.reset();
    } else {
      double v = 0.0;
      read_value(j, where, v);
      out = v;
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw PreconditionError(fmt::format("config: {} must be a boolean", where));
    out = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw PreconditionError(fmt::format("config: {} must be an integer", where));
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_unsigned()) {
        out = j.get<T>();
        return;
      }
      if (j.get<std::int64_t>() < 0) throw PreconditionError(fmt::format("config: {} must be non-negative", where));
      out = static_cast<T>(j.get<std::int64_t>());
    } else {
      const auto v = j.get<std::int64_t>();
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
        throw PreconditionError(fmt::format("config: {} is out of range", where));
      out = static_cast<T>(v);
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw PreconditionError(fmt::format("config: {} must be a number", where));
    out = j.get<T>();
  } else {
    if (!j.is_string()) throw PreconditionError(fmt::format("config: {} must be a string", where));
    out = j.get<std::string>();
  }
}

template <class T>
void section_from_json(const ordered_json& j, const std::string& section, T& out) {
  if (!j.is_object()) throw PreconditionError(fmt::format("config: {} must be an object", section));
  std::set<std::string> known;
  visit(out, [&](const char* name, auto&) { known.insert(name); });
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw PreconditionError(fmt::format("config: unknown key {}.{}", section, key));
  visit(out, [&](const char* name, auto& field) {
    if (j.contains(name)) read_value(j.at(name), section + "." + name, field);
  });
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["synth"] = section_to_json(c.synth);
  j["model"] = section_to_json(c.model);
  j["train"] = section_to_json(c.train);
  j["search"] = section_to_json(c.search);
  j["eval"] = section_to_json(c.eval);
  return j;
}

RunConfig from_json(const ordered_json& j) {
  if (!j.is_object()) throw PreconditionError("config: top level must be an object");
  RunConfig c;
  static const std::set<std::string> kTop = {"schema_version", "seed", "synth", "model", "train", "search", "eval"};
  for (const auto& [key, _] : j.items())
    if (!kTop.count(key)) throw PreconditionError(fmt::format("config: unknown key {}", key));
  if (j.contains("schema_version")) read_value(j.at("schema_version"), "schema_version", c.schema_version);
  if (c.schema_version != kRunConfigSchemaVersion)
    throw PreconditionError(fmt::format("config: unsupported schema_version {}", c.schema_version));
  if (j.contains("seed")) read_value(j.at("seed"), "seed", c.seed);
  if (j.contains("synth")) section_from_json(j.at("synth"), "synth", c.synth);
  if (j.contains("model")) section_from_json(j.at("model"), "model", c.model);
  if (j.contains("train")) section_from_json(j.at("train"), "train", c.train);
  if (j.contains("search")) section_from_json(j.at("search"), "search", c.search);
  if (j.contains("eval")) section_from_json(j.at("eval"), "eval", c.eval);
  c.propagate_seed();
  return c;
}

}  // namespace

void RunConfig::propagate_seed() {
  synth.seed = seed;
  train.seed = seed;
}

void RunConfig::check() const {
  synth.check();
  model.check();
  train.check();
  if (!(search.threshold > 0.0 && search.threshold < 1.0))
    throw PreconditionError("search.threshold must be in (0, 1)");
  if (eval.mode != "atwv" && eval.mode != "mtwv") throw PreconditionError("eval.mode must be atwv or mtwv");
  if (!(eval.beta_fa > 0.0)) throw PreconditionError("eval.beta_fa must be positive");
  if (!(eval.tolerance_s >= 0.0)) throw PreconditionError("eval.tolerance_s must be non-negative");
  if (eval.t_speech_s && !(*eval.t_speech_s > 0.0)) throw PreconditionError("eval.t_speech_s must be positive");
}

RunConfig parse_run_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw PreconditionError(fmt::format("config: invalid JSON: {}", e.what()));
  }
  return from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::read_file(path));
}

std::string run_config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  detail::write_file(path, run_config_to_json(config));
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  ordered_json parsed;
  try {
    parsed = ordered_json::parse(value);
  } catch (const ordered_json::parse_error&) {
    parsed = value;
  }
  ordered_json j = to_json(config);
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    if (!j.contains(key) || j.at(key).is_object()) throw PreconditionError(fmt::format("config: unknown key {}", key));
    j[key] = parsed;
  } else {
    const auto section = key.substr(0, dot);
    const auto field = key.substr(dot + 1);
    if (!j.contains(section) || !j.at(section).is_object() || !j.at(section).contains(field))
      throw PreconditionError(fmt::format("config: unknown key {}", key));
    j[section][field] = parsed;
  }
  config = from_json(j);
}

}  // namespace gcnstd
