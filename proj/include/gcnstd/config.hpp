// gcnstd/config.hpp

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

#ifndef GCNSTD_CONFIG_HPP_
#define GCNSTD_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gcnstd/eval.hpp"
#include "gcnstd/nn.hpp"
#include "gcnstd/search.hpp"
#include "gcnstd/synth.hpp"
#include "gcnstd/train.hpp"

namespace gcnstd {

inline constexpr int kRunConfigSchemaVersion = 1;

struct SearchConfig {
  double threshold = kDefaultDetectThreshold;
  bool operator==(const SearchConfig&) const = default;
};

struct EvalConfig {
  std::string mode = "mtwv";
  std::optional<double> threshold;    // required for "atwv" unless a model supplies one
  std::optional<double> t_speech_s;   // falls back to corpus_stats.json when absent
  double beta_fa = kDefaultBetaFa;
  double tolerance_s = kDefaultMatchTolerance;
  bool operator==(const EvalConfig&) const = default;
};

/// Everything a pipeline run depends on. `seed` is the only source of
/// randomness; the per-module seeds are derived from it.
struct RunConfig {
  int schema_version = kRunConfigSchemaVersion;
  std::uint64_t seed = 0;
  SynthConfig synth;
  ModelConfig model;
  HyperParams train;
  SearchConfig search;
  EvalConfig eval;

  /// Pushes `seed` into the module configs that carry one.
  void propagate_seed();
  void check() const;
  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys, wrong types and a foreign schema_version
/// raise PreconditionError. Missing keys keep their defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully materialized JSON (every field, defaults included).
std::string run_config_to_json(const RunConfig& config);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

/// Sets a dotted key such as "train.steps" or "seed". `value` is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace gcnstd

#endif  // GCNSTD_CONFIG_HPP_
