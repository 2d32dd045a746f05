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

#include <cmath>

#include "core/error.hpp"
#include "core/linear_probe.hpp"
#include "core/util.hpp"
#include "support/oracles.hpp"

namespace cxr {
namespace {

TEST(BceTest, MatchesHighPrecisionReference) {
  DeterministicRng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(16);
    std::vector<double> z(n), y(n);
    long double ref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = rng.normal() * 8.0;
      y[i] = static_cast<double>(rng.below(2));
      ref += oracle::bce_reference(z[i], y[i]);
    }
    ref /= n;
    EXPECT_NEAR(bce_with_logits(z, y), static_cast<double>(ref), 1e-12 * (1 + std::abs(static_cast<double>(ref))));
  }
}

TEST(BceTest, StableForExtremeLogits) {
  const std::vector<double> z{800.0, -800.0, 50.0, -50.0};
  const std::vector<double> y{1.0, 0.0, 0.0, 1.0};
  const double l = bce_with_logits(z, y);
  ASSERT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, (0.0 + 0.0 + 50.0 + 50.0) / 4.0, 1e-9);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
}

TEST(BceTest, GradientMatchesCentralDifferences) {
  DeterministicRng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> z(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = rng.normal() * 3.0;
      y[i] = static_cast<double>(rng.below(2));
    }
    const auto g = bce_with_logits_gradient(z, y);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = 1e-5;
      auto zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (bce_with_logits(zp, y) - bce_with_logits(zm, y)) / (2 * h);
      EXPECT_LE(std::abs(fd - g[i]), 1e-6 * std::max(1e-3, std::abs(g[i])))
          << "trial " << trial << " index " << i;
    }
  }
}

TEST(BceTest, LengthMismatchRejected) {
  EXPECT_THROW(bce_with_logits(std::vector<double>{1.0}, std::vector<double>{}), Error);
}

TEST(TrainTest, ValidatesConfig) {
  const auto f = oracle::separable_frame(10, 2, 3, 1);
  EXPECT_THROW(train(f, TrainConfig{0, 1, 0.1, 0, Optimizer::kSgd}), Error);
  EXPECT_THROW(train(f, TrainConfig{4, 0, 0.1, 0, Optimizer::kSgd}), Error);
  EXPECT_THROW(train(f, TrainConfig{4, 1, 0.0, 0, Optimizer::kSgd}), Error);
}

TEST(TrainTest, SeparableFrameIsLearned) {
  const auto f = oracle::separable_frame(400, 8, 16, 3);
  const auto parts = split_frame(f, {0.5, 0.01, 0.49}, 1);
  for (Optimizer opt : {Optimizer::kSgd, Optimizer::kAdam}) {
    TrainConfig c{16, 60, opt == Optimizer::kSgd ? 1.0 : 0.05, 7, opt};
    const auto w = train(parts.train, c);
    const auto e = evaluate_probe(w, parts.test);
    EXPECT_GE(e.accuracy.overall, 0.99) << optimizer_name(opt);
    EXPECT_GT(*e.auc.macro, 0.999);
    EXPECT_LT(w.provenance.final_loss, w.provenance.epoch_losses.front());
    EXPECT_EQ(w.provenance.epoch_losses.size(), 60u);
  }
}

TEST(TrainTest, DeterministicForSeed) {
  const auto f = oracle::separable_frame(100, 3, 5, 2);
  const TrainConfig c{8, 5, 0.1, 42, Optimizer::kAdam};
  const auto a = train(f, c), b = train(f, c);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  auto c2 = c;
  c2.seed = 43;
  EXPECT_NE(train(f, c2).weights, a.weights);
}

TEST(TrainTest, DivergenceNamesTheEpoch) {
  auto base = oracle::separable_frame(20, 2, 3, 1);
  std::vector<float> big(base.embeddings().values());
  for (auto& v : big) v *= 1e30f;
  EmbeddingFrame f(base.manifest(), EmbeddingMatrix(base.rows(), base.dim(), big));
  try {
    train(f, TrainConfig{4, 3, 1e300, 0, Optimizer::kSgd});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDiverged);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(PredictTest, MatchesNaiveOracle) {
  DeterministicRng rng(12);
  ProbeWeights w;
  w.label_set = oracle::numbered_labels(4, false);
  w.dim = 6;
  for (int i = 0; i < 24; ++i) w.weights.push_back(rng.normal());
  for (int i = 0; i < 4; ++i) w.bias.push_back(rng.normal());
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> x(6);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    const auto d = predict(w, std::span<const float>(x));
    for (std::size_t l = 0; l < 4; ++l) {
      std::vector<double> row(w.weights.begin() + l * 6, w.weights.begin() + (l + 1) * 6);
      EXPECT_NEAR(d.scores()[l], oracle::naive_sigmoid_affine(row, w.bias[l], x), 1e-12);
    }
  }
  std::vector<float> wrong(5);
  try {
    predict(w, std::span<const float>(wrong));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(WeightsFormatTest, EncodeDecodeIsByteIdentical) {
  const auto f = oracle::separable_frame(30, 3, 4, 5);
  const auto w = train(f, TrainConfig{8, 3, 0.1, 1, Optimizer::kSgd});
  const auto bytes = encode_weights(w);
  const auto back = decode_weights(bytes);
  EXPECT_EQ(back.weights, w.weights);
  EXPECT_EQ(back.bias, w.bias);
  EXPECT_EQ(back.label_set->labels(), w.label_set->labels());
  EXPECT_EQ(encode_weights(back), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "CXRP");
  EXPECT_THROW(decode_weights(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(decode_weights("XXXX" + bytes.substr(4)), Error);
}

TEST(WeightsFormatTest, SidecarRestoresLabelSetAndProvenance) {
  oracle::TempDir dir("weights");
  auto ls = std::make_shared<const LabelSet>(
      LabelSet("c", {"No Finding", "Cardiomegaly", "Edema", "Support Devices"}, "No Finding",
               {"Cardiomegaly"}, {"Support Devices"}));
  ProbeWeights w;
  w.label_set = ls;
  w.dim = 2;
  w.weights = {1, 2, 3, 4, 5, 6, 7, 8};
  w.bias = {0.1, 0.2, 0.3, 0.4};
  w.provenance.config = TrainConfig{64, 10, 1e-4, 9, Optimizer::kAdam};
  w.provenance.dataset_fingerprint = "abc";
  w.provenance.final_loss = 0.25;
  w.provenance.epoch_losses = {0.5, 0.25};
  save_weights(dir.path / "p.bin", w);
  const auto back = load_weights(dir.path / "p.bin");
  EXPECT_EQ(*back.label_set, *ls);
  EXPECT_EQ(back.provenance.config, w.provenance.config);
  EXPECT_EQ(back.provenance.dataset_fingerprint, "abc");
  EXPECT_EQ(back.provenance.epoch_losses, w.provenance.epoch_losses);
  EXPECT_EQ(read_file(dir.path / "p.bin"), encode_weights(w));

  std::filesystem::remove(dir.path / "p.bin.json");
  const auto bare = load_weights(dir.path / "p.bin");
  EXPECT_TRUE(bare.label_set->suppressed().empty());
  EXPECT_EQ(bare.weights, w.weights);
}

TEST(GridSearchTest, DeterministicAcrossThreadCounts) {
  const auto f = oracle::separable_frame(120, 3, 6, 9);
  const auto parts = split_frame(f, {0.69, 0.3, 0.01}, 2);
  GridSearchSpace space{{8, 32}, {2, 4}, {0.01, 0.1, 1.0}};
  const auto a = grid_search(parts.train, parts.val, space, SelectionMetric::kExactMatch, 5,
                             Optimizer::kSgd, 0.5, 1);
  const auto b = grid_search(parts.train, parts.val, space, SelectionMetric::kExactMatch, 5,
                             Optimizer::kSgd, 0.5, 4);
  ASSERT_EQ(a.leaderboard.size(), 12u);
  for (std::size_t i = 0; i < a.leaderboard.size(); ++i) {
    EXPECT_EQ(a.leaderboard[i].config, b.leaderboard[i].config);
    EXPECT_EQ(a.leaderboard[i].score, b.leaderboard[i].score);
  }
  for (std::size_t i = 1; i < a.leaderboard.size(); ++i)
    EXPECT_GE(a.leaderboard[i - 1].score, a.leaderboard[i].score);
  EXPECT_EQ(a.best, a.leaderboard.front().config);
  EXPECT_GE(a.exact_match_spread, 0.0);
  const auto retrained = train(parts.train, a.best);
  EXPECT_DOUBLE_EQ(evaluate_probe(retrained, parts.val).accuracy.overall,
                   a.leaderboard.front().exact_match);
}

TEST(GridSearchTest, ReferenceSpaceHas45Configurations) {
  EXPECT_EQ(GridSearchSpace::reference().size(), 45u);
  EXPECT_EQ(parse_selection_metric(selection_metric_name(SelectionMetric::kMacroAuc)),
            SelectionMetric::kMacroAuc);
}

}  // namespace
}  // namespace cxr
