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

#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "core/embedding_store.hpp"
#include "core/error.hpp"
#include "core/util.hpp"
#include "support/oracles.hpp"

namespace cxr {
namespace {

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  DeterministicRng rng(seed);
  std::vector<float> v(rows * dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return EmbeddingMatrix(rows, dim, std::move(v));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

TEST(EmbeddingFormatTest, EncodeDecodeIsByteIdentical) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_matrix(seed % 5, 1 + seed % 7, seed);
    const auto bytes = encode_embeddings(m);
    EXPECT_EQ(bytes.size(), 16 + m.rows() * m.dim() * 4);
    const auto back = decode_embeddings(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(encode_embeddings(back), bytes);
  }
}

TEST(EmbeddingFormatTest, HeaderIsLittleEndian) {
  const auto bytes = encode_embeddings(EmbeddingMatrix(2, 3, std::vector<float>(6, 1.0f)));
  EXPECT_EQ(bytes.substr(0, 4), "CXRE");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3);
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0x80);
}

TEST(EmbeddingFormatTest, CorruptInputsAreFormatErrors) {
  auto good = encode_embeddings(random_matrix(2, 4, 1));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  auto bad_version = good;
  bad_version[4] = 9;
  auto zero_dim = good;
  zero_dim[12] = 0;
  EXPECT_EQ(code_of([&] { decode_embeddings(bad_magic); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { decode_embeddings(bad_version); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { decode_embeddings(zero_dim); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { decode_embeddings(good.substr(0, good.size() - 1)); }),
            ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { decode_embeddings(good + "x"); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { decode_embeddings("CX"); }), ErrorCode::kFormat);
}

TEST(EmbeddingFormatTest, FileRoundTrip) {
  oracle::TempDir dir("emb");
  const auto m = random_matrix(5, 3, 2);
  write_embeddings(dir.path / "e.cxre", m);
  EXPECT_EQ(read_embeddings(dir.path / "e.cxre"), m);
  EXPECT_EQ(read_file(dir.path / "e.cxre"), encode_embeddings(m));
}

DatasetManifest manifest_of(std::size_t rows) {
  auto ls = std::make_shared<const LabelSet>(LabelSet("t", {"No Finding", "A", "B"}, "No Finding"));
  DatasetManifest m{ls, {}, "unit"};
  for (std::size_t i = 0; i < rows; ++i)
    m.records.push_back({"id" + std::to_string(i), i % 2 ? Split::kTrain : Split::kTest,
                         {static_cast<std::uint8_t>(i % 3 == 0), static_cast<std::uint8_t>(i % 3 == 1),
                          static_cast<std::uint8_t>(i % 3 == 2)},
                         std::nullopt});
  return m;
}

TEST(ManifestTest, JsonRoundTrip) {
  const auto m = manifest_of(6);
  const auto back = manifest_from_json(manifest_to_json(m));
  EXPECT_EQ(*back.label_set, *m.label_set);
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.source_name, "unit");
}

TEST(ManifestTest, LabelWidthMismatchIsConsistencyError) {
  auto j = manifest_to_json(manifest_of(2));
  j["records"][0]["labels"] = {1, 0};
  EXPECT_EQ(code_of([&] { manifest_from_json(j); }), ErrorCode::kConsistency);
}

TEST(FrameTest, RowMismatchIsConsistencyError) {
  EXPECT_EQ(code_of([&] { EmbeddingFrame(manifest_of(3), random_matrix(4, 2, 0)); }),
            ErrorCode::kConsistency);
}

TEST(FrameTest, DeclaredSplitsSelectRows) {
  EmbeddingFrame f(manifest_of(6), random_matrix(6, 2, 0));
  EXPECT_TRUE(f.has_declared_splits());
  const auto train = f.rows_in_split(Split::kTrain);
  EXPECT_EQ(train.rows(), 3u);
  EXPECT_EQ(train.record(0).image_id, "id1");
  EXPECT_EQ(train.embeddings().row(0)[0], f.embeddings().row(1)[0]);
  EXPECT_EQ(f.rows_in_split(Split::kVal).rows(), 0u);
}

TEST(FrameTest, FingerprintTracksContent) {
  EmbeddingFrame a(manifest_of(4), random_matrix(4, 2, 0));
  EmbeddingFrame b(manifest_of(4), random_matrix(4, 2, 0));
  EmbeddingFrame c(manifest_of(4), random_matrix(4, 2, 1));
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(SplitTest, ReferenceFractionsOn3000Rows) {
  const auto s = split_indices(3000, {}, 42);
  EXPECT_EQ(s.train_indices.size(), 2250u);
  EXPECT_EQ(s.val_indices.size(), 300u);
  EXPECT_EQ(s.test_indices.size(), 450u);
}

TEST(SplitTest, PartitionIsDisjointCoverAndSeeded) {
  for (std::size_t n : {1u, 7u, 10u, 101u, 999u}) {
    const auto s = split_indices(n, {}, n);
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train_indices, &s.val_indices, &s.test_indices})
      all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(n);
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(all, expect);
    EXPECT_EQ(s.val_indices.size(), static_cast<std::size_t>(std::floor(n * 0.10 + 1e-9)));
    EXPECT_EQ(s.test_indices.size(), static_cast<std::size_t>(std::floor(n * 0.15 + 1e-9)));
  }
  EXPECT_EQ(split_indices(100, {}, 1).train_indices, split_indices(100, {}, 1).train_indices);
  EXPECT_NE(split_indices(100, {}, 1).train_indices, split_indices(100, {}, 2).train_indices);
}

TEST(SplitTest, BadFractionsRejected) {
  EXPECT_THROW(split_indices(10, {0.5, 0.5, 0.5}, 0), Error);
  EXPECT_THROW(split_indices(10, {-0.1, 0.6, 0.5}, 0), Error);
  EXPECT_THROW(split_indices(0, {}, 0), Error);
}

TEST(SplitTest, SplitFrameKeepsRowsAligned) {
  EmbeddingFrame f(manifest_of(20), random_matrix(20, 3, 9));
  const auto parts = split_frame(f, {}, 3);
  EXPECT_EQ(parts.train.rows() + parts.val.rows() + parts.test.rows(), 20u);
  for (std::size_t i = 0; i < parts.test.rows(); ++i) {
    const auto& id = parts.test.record(i).image_id;
    const std::size_t src = std::stoul(id.substr(2));
    EXPECT_EQ(parts.test.embeddings().row(i)[2], f.embeddings().row(src)[2]);
  }
}

TEST(ClassCountsTest, MatchesCountingOracle) {
  EmbeddingFrame f(manifest_of(9), random_matrix(9, 1, 0));
  const auto c = class_counts(f);
  std::map<std::string, std::size_t> pos;
  std::size_t none = 0;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    bool any = false;
    for (std::size_t l = 0; l < 3; ++l) {
      pos[f.label_set().labels()[l]] += f.record(i).labels[l];
      if (l > 0 && f.record(i).labels[l]) any = true;
    }
    none += !any;
  }
  EXPECT_EQ(c.positives, pos);
  EXPECT_EQ(c.no_finding_cases, none);
  EXPECT_EQ(c.total, 9u);
}

}  // namespace
}  // namespace cxr
