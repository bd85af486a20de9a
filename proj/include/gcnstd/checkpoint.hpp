// gcnstd/checkpoint.hpp

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

#ifndef GCNSTD_CHECKPOINT_HPP_
#define GCNSTD_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "gcnstd/nn.hpp"

namespace gcnstd {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Writes `dir`/manifest.json and `dir`/params.bin. The blob holds every
/// tensor in manifest order as row-major little-endian float32.
void save_model(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_model(const std::filesystem::path& dir);

/// Row-major float32 encoding of a list of matrices (shared by the model
/// checkpoint and the search index).
std::string encode_tensors(const std::vector<const Matrix*>& tensors);
/// Decodes tensors whose shapes are known; throws FormatError on size mismatch.
void decode_tensors(const std::string& bytes, const std::vector<Matrix*>& tensors);

}  // namespace gcnstd

#endif  // GCNSTD_CHECKPOINT_HPP_
