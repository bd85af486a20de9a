// tests/support/benchmark.hpp

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

#ifndef GCNSTD_TESTS_BENCHMARK_HPP_
#define GCNSTD_TESTS_BENCHMARK_HPP_

#include <string>
#include <vector>

#include "gcnstd/config.hpp"
#include "gcnstd/nn.hpp"
#include "gcnstd/search.hpp"

namespace gcnstd::bench {

/// End-to-end synthetic run: generate, decode, train, index, search and
/// score the dev and test splits.
struct BenchResult {
  double dev_mtwv = 0.0;
  double dev_threshold = 0.0;
  double dev_heldout_mtwv = 0.0;
  double dev_inlexicon_mtwv = 0.0;
  double baseline_mtwv = 0.0;
  double test_atwv = 0.0;
  double test_mtwv = 0.0;
  std::size_t num_queries = 0;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<Hit> dev_hits;
  std::vector<Hit> test_hits;
  std::string dev_report;   // report JSON
  std::string test_report;  // report JSON
  ModelParams params;
};

/// The desk-scale configuration used by the acceptance benchmark.
RunConfig benchmark_config();

/// Trains from scratch unless `pretrained` is given.
BenchResult run_benchmark(const RunConfig& config, int jobs = 0, int log_every = 0,
                          const ModelParams* pretrained = nullptr);

}  // namespace gcnstd::bench

#endif  // GCNSTD_TESTS_BENCHMARK_HPP_
