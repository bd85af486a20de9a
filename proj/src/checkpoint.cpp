// src/checkpoint.cpp

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

#include "gcnstd/checkpoint.hpp"

#include <fmt/format.h>

#include "file_util.hpp"
#include "json.hpp"

namespace gcnstd {

using nlohmann::json;

std::string encode_tensors(const std::vector<const Matrix*>& tensors) {
  std::string out;
  for (const Matrix* m : tensors)
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) detail::put_f32(out, static_cast<float>((*m)(r, c)));
  return out;
}

void decode_tensors(const std::string& bytes, const std::vector<Matrix*>& tensors) {
  std::size_t expected = 0;
  for (const Matrix* m : tensors) expected += 4 * static_cast<std::size_t>(m->size());
  if (bytes.size() != expected)
    throw FormatError(fmt::format("tensor blob has {} bytes, expected {}", bytes.size(), expected));
  const char* p = bytes.data();
  for (Matrix* m : tensors)
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c, p += 4) (*m)(r, c) = detail::get_f32(p);
}

void save_model(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = params.config;
  json tensors = json::array();
  std::vector<const Matrix*> blobs;
  params.for_each_tensor([&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
    blobs.push_back(&m);
  });
  json manifest = {
      {"schema_version", kCheckpointSchemaVersion},
      {"kind", "gcnstd-model"},
      {"architecture",
       {{"width", cfg.width},
        {"num_layers", cfg.num_layers},
        {"cn_embed_dim", cfg.cn_embed_dim},
        {"query_embed_dim", cfg.query_embed_dim},
        {"minlen_units", cfg.minlen_units},
        {"query_vectors", kQueryVectors}}},
      {"vocab", params.vocab},
      {"tensors", tensors},
      {"blob", "params.bin"},
  };
  detail::write_file(dir / "params.bin", encode_tensors(blobs));
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelParams load_model(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model manifest: ") + e.what());
  }
  ModelParams params;
  try {
    if (manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion)
      throw FormatError("unsupported model schema_version");
    const auto& a = manifest.at("architecture");
    ModelConfig cfg;
    cfg.width = a.at("width").get<int>();
    cfg.num_layers = a.at("num_layers").get<int>();
    cfg.cn_embed_dim = a.at("cn_embed_dim").get<int>();
    cfg.query_embed_dim = a.at("query_embed_dim").get<int>();
    cfg.minlen_units = a.at("minlen_units").get<int>();
    ModelParams shape;
    shape.config = cfg;
    shape.vocab = manifest.at("vocab").get<std::vector<std::string>>();
    params = zeros_like(shape);
    std::vector<Matrix*> blobs;
    std::size_t n = 0;
    const auto& listed = manifest.at("tensors");
    params.for_each_tensor([&](const std::string& name, Matrix& m) {
      if (n >= listed.size() || listed[n].at("name").get<std::string>() != name ||
          listed[n].at("shape").at(0).get<Eigen::Index>() != m.rows() ||
          listed[n].at("shape").at(1).get<Eigen::Index>() != m.cols())
        throw FormatError(fmt::format("manifest tensor {} does not match architecture ({})", n, name));
      blobs.push_back(&m);
      ++n;
    });
    if (n != listed.size()) throw FormatError("manifest lists extra tensors");
    decode_tensors(detail::read_file(dir / manifest.value("blob", std::string("params.bin"))), blobs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model manifest: ") + e.what());
  }
  return params;
}

}  // namespace gcnstd
