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

#include "core/embedding_store.hpp"

#include <cmath>
#include <numeric>

#include "core/binary_io.hpp"
#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim,
                                 std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
  require(dim_ > 0, "embedding dim must be positive");
  require(values_.size() == rows_ * dim_,
          "embedding payload has " + std::to_string(values_.size()) +
              " values, expected rows*dim = " + std::to_string(rows_ * dim_));
}

EmbeddingMatrix EmbeddingMatrix::select_rows(
    std::span<const std::size_t> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * dim_);
  for (auto i : indices) {
    require(i < rows_, "row index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim_, std::move(out));
}

EmbeddingMatrix decode_embeddings(std::string_view bytes) {
  ByteReader in(bytes, "embedding file");
  auto magic = in.bytes(4);
  if (magic != std::string_view(kEmbeddingMagic.data(), 4))
    fail(ErrorCode::kFormat, "embedding file: bad magic");
  const auto version = in.u32();
  if (version != kEmbeddingVersion)
    fail(ErrorCode::kFormat,
         "embedding file: unsupported version " + std::to_string(version));
  const std::uint64_t rows = in.u32();
  const std::uint64_t dim = in.u32();
  if (dim == 0) fail(ErrorCode::kFormat, "embedding file: dim is zero");
  const std::uint64_t payload = rows * dim * 4;
  if (in.remaining() != payload)
    fail(ErrorCode::kFormat, "embedding file: payload is " +
                                 std::to_string(in.remaining()) +
                                 " bytes, header implies " + std::to_string(payload));
  std::vector<float> values(rows * dim);
  for (auto& v : values) v = in.f32();
  return EmbeddingMatrix(rows, dim, std::move(values));
}

std::string encode_embeddings(const EmbeddingMatrix& matrix) {
  ByteWriter out;
  out.reserve(16 + matrix.values().size() * 4);
  out.bytes(std::string_view(kEmbeddingMagic.data(), 4));
  out.u32(kEmbeddingVersion);
  out.u32(static_cast<std::uint32_t>(matrix.rows()));
  out.u32(static_cast<std::uint32_t>(matrix.dim()));
  for (float v : matrix.values()) out.f32(v);
  return out.take();
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file(path));
}

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingMatrix& matrix) {
  write_file(path, encode_embeddings(matrix));
}

json label_set_to_json(const LabelSet& labels) {
  json j;
  j["name"] = labels.name();
  j["labels"] = labels.labels();
  j["no_finding_label"] = labels.no_finding_label()
                              ? json(*labels.no_finding_label())
                              : json(nullptr);
  j["non_lateralizable"] = labels.non_lateralizable();
  j["suppressed"] = labels.suppressed();
  return j;
}

LabelSet label_set_from_json(const json& j) {
  try {
    std::optional<std::string> nf;
    if (j.contains("no_finding_label") && !j["no_finding_label"].is_null())
      nf = j["no_finding_label"].get<std::string>();
    return LabelSet(j.at("name").get<std::string>(),
                    j.at("labels").get<std::vector<std::string>>(), nf,
                    j.value("non_lateralizable", std::set<std::string>{}),
                    j.value("suppressed", std::set<std::string>{}));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("label set: ") + e.what());
  }
}

json manifest_to_json(const DatasetManifest& manifest) {
  json records = json::array();
  for (const auto& r : manifest.records) {
    json jr;
    jr["image_id"] = r.image_id;
    if (r.split) jr["split"] = split_name(*r.split);
    jr["labels"] = r.labels;
    if (r.image_uri) jr["image_uri"] = *r.image_uri;
    records.push_back(std::move(jr));
  }
  return json{{"source_name", manifest.source_name},
              {"label_set", label_set_to_json(*manifest.label_set)},
              {"records", std::move(records)}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.source_name = j.value("source_name", std::string{});
    m.label_set = std::make_shared<const LabelSet>(label_set_from_json(j.at("label_set")));
    for (const auto& jr : j.at("records")) {
      ScanRecord r;
      r.image_id = jr.at("image_id").get<std::string>();
      if (jr.contains("split") && !jr["split"].is_null())
        r.split = parse_split(jr["split"].get<std::string>());
      for (const auto& v : jr.at("labels")) {
        const int x = v.is_boolean() ? (v.get<bool>() ? 1 : 0) : v.get<int>();
        if (x != 0 && x != 1)
          fail(ErrorCode::kFormat, "record '" + r.image_id + "': labels must be 0/1");
        r.labels.push_back(static_cast<std::uint8_t>(x));
      }
      if (jr.contains("image_uri")) r.image_uri = jr["image_uri"].get<std::string>();
      if (r.labels.size() != m.label_set->size())
        fail(ErrorCode::kConsistency,
             "record '" + r.image_id + "' has " + std::to_string(r.labels.size()) +
                 " labels, label set has " + std::to_string(m.label_set->size()));
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "manifest '" + path.string() + "': " + e.what());
  }
  return manifest_from_json(j);
}

void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest) {
  write_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

EmbeddingFrame::EmbeddingFrame(DatasetManifest manifest, EmbeddingMatrix embeddings)
    : manifest_(std::move(manifest)), embeddings_(std::move(embeddings)) {
  if (!manifest_.label_set) fail(ErrorCode::kConsistency, "manifest has no label set");
  if (manifest_.records.size() != embeddings_.rows())
    fail(ErrorCode::kConsistency,
         "manifest lists " + std::to_string(manifest_.records.size()) +
             " records but the embedding file has " +
             std::to_string(embeddings_.rows()) + " rows");
  for (const auto& r : manifest_.records)
    if (r.labels.size() != manifest_.label_set->size())
      fail(ErrorCode::kConsistency, "record '" + r.image_id + "' label width mismatch");
}

EmbeddingFrame EmbeddingFrame::subset(std::span<const std::size_t> indices) const {
  DatasetManifest m;
  m.label_set = manifest_.label_set;
  m.source_name = manifest_.source_name;
  m.records.reserve(indices.size());
  for (auto i : indices) m.records.push_back(manifest_.records.at(i));
  return EmbeddingFrame(std::move(m), embeddings_.select_rows(indices));
}

EmbeddingFrame EmbeddingFrame::rows_in_split(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < manifest_.records.size(); ++i)
    if (manifest_.records[i].split == split) idx.push_back(i);
  return subset(idx);
}

bool EmbeddingFrame::has_declared_splits() const {
  for (const auto& r : manifest_.records)
    if (!r.split) return false;
  return !manifest_.records.empty();
}

std::string EmbeddingFrame::fingerprint() const {
  std::uint64_t h = fnv1a(manifest_.label_set->name());
  for (const auto& l : manifest_.label_set->labels()) h = fnv1a(l, h);
  for (const auto& r : manifest_.records) {
    h = fnv1a(r.image_id, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(r.labels.data()),
                               r.labels.size()),
              h);
  }
  h = fnv1a(encode_embeddings(embeddings_), h);
  return hex64(h);
}

EmbeddingFrame load_frame(const std::filesystem::path& manifest_path,
                          const std::filesystem::path& embedding_path) {
  return EmbeddingFrame(read_manifest(manifest_path), read_embeddings(embedding_path));
}

FrameSplit split_indices(std::size_t rows, SplitFractions f, std::uint64_t seed) {
  require(f.train > 0 && f.val > 0 && f.test > 0, "split fractions must be positive");
  require(std::abs(f.train + f.val + f.test - 1.0) <= 1e-9,
          "split fractions must sum to 1");
  if (rows == 0) fail(ErrorCode::kInvalidArgument, "cannot split an empty frame");

  // The epsilon absorbs binary rounding, e.g. 10 * 0.7 = 6.9999999999999991.
  auto floor_count = [rows](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(rows) * frac + 1e-9));
  };
  const std::size_t n_val = floor_count(f.val);
  const std::size_t n_test = floor_count(f.test);
  const std::size_t n_train = rows - n_val - n_test;

  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  DeterministicRng rng(seed);
  rng.shuffle(order);

  FrameSplit out;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  out.val_indices.assign(order.begin() + static_cast<long>(n_train),
                         order.begin() + static_cast<long>(n_train + n_val));
  out.test_indices.assign(order.begin() + static_cast<long>(n_train + n_val), order.end());
  return out;
}

SplitFrames split_frame(const EmbeddingFrame& frame, SplitFractions fractions,
                        std::uint64_t seed) {
  auto s = split_indices(frame.rows(), fractions, seed);
  return SplitFrames{frame.subset(s.train_indices), frame.subset(s.val_indices),
                     frame.subset(s.test_indices)};
}

ClassCounts class_counts(const EmbeddingFrame& frame) {
  ClassCounts c;
  const auto& ls = frame.label_set();
  for (const auto& l : ls.labels()) c.positives[l] = 0;
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    const auto& rec = frame.record(i);
    for (std::size_t k = 0; k < ls.size(); ++k)
      if (rec.labels[k]) ++c.positives[ls.labels()[k]];
    if (positive_findings(rec, ls).empty()) ++c.no_finding_cases;
  }
  c.total = frame.rows();
  return c;
}

}  // namespace cxr
