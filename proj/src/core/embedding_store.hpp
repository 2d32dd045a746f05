// Copyright 2026 The CXR Agent Authors.
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

// Precomputed encoder embeddings plus ground-truth labels.
//
// Embedding container ("CXRE", all integers little-endian):
//
//   offset  size        field
//   0       4           magic "CXRE"
//   4       4           version (u32) = 1
//   8       4           rows (u32)
//   12      4           dim (u32), > 0
//   16      rows*dim*4  IEEE-754 binary32 payload, row-major
//
// The manifest is UTF-8 JSON:
//   {source_name, label_set: {name, labels[], no_finding_label,
//    non_lateralizable[], suppressed[]}, records: [{image_id, split?, labels[]}]}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  const std::vector<float>& values() const { return values_; }

  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

inline constexpr std::array<char, 4> kEmbeddingMagic = {'C', 'X', 'R', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

EmbeddingMatrix decode_embeddings(std::string_view bytes);
std::string encode_embeddings(const EmbeddingMatrix& matrix);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingMatrix& matrix);

nlohmann::json label_set_to_json(const LabelSet& labels);
LabelSet label_set_from_json(const nlohmann::json& j);

struct DatasetManifest {
  std::shared_ptr<const LabelSet> label_set;
  std::vector<ScanRecord> records;
  std::string source_name;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest);

class EmbeddingFrame {
 public:
  // Throws kConsistency when the manifest and matrix disagree.
  EmbeddingFrame(DatasetManifest manifest, EmbeddingMatrix embeddings);

  const DatasetManifest& manifest() const { return manifest_; }
  const LabelSet& label_set() const { return *manifest_.label_set; }
  const EmbeddingMatrix& embeddings() const { return embeddings_; }
  std::size_t rows() const { return embeddings_.rows(); }
  std::size_t dim() const { return embeddings_.dim(); }
  const ScanRecord& record(std::size_t i) const { return manifest_.records[i]; }

  EmbeddingFrame subset(std::span<const std::size_t> indices) const;
  // Rows whose record carries `split`.
  EmbeddingFrame rows_in_split(Split split) const;
  bool has_declared_splits() const;

  // Stable hash over labels and embedding payload.
  std::string fingerprint() const;

 private:
  DatasetManifest manifest_;
  EmbeddingMatrix embeddings_;
};

EmbeddingFrame load_frame(const std::filesystem::path& manifest_path,
                          const std::filesystem::path& embedding_path);

struct SplitFractions {
  double train = 0.75;
  double val = 0.10;
  double test = 0.15;
};

struct FrameSplit {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
};

// Seeded Fisher-Yates over row indices. val and test sizes are
// floor(n * fraction); the remainder goes to train.
FrameSplit split_indices(std::size_t rows, SplitFractions fractions,
                         std::uint64_t seed);

struct SplitFrames {
  EmbeddingFrame train;
  EmbeddingFrame val;
  EmbeddingFrame test;
};

SplitFrames split_frame(const EmbeddingFrame& frame, SplitFractions fractions,
                        std::uint64_t seed);

struct ClassCounts {
  std::map<std::string, std::size_t> positives;  // every label, zeros included
  std::size_t no_finding_cases = 0;  // records with no positive pathology
  std::size_t total = 0;
};

ClassCounts class_counts(const EmbeddingFrame& frame);

}  // namespace cxr
