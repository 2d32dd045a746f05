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

// Multi-label linear probes over frozen embeddings: one affine layer whose
// outputs pass through a sigmoid, trained with mean binary cross-entropy on
// logits.
//
// Weights file ("CXRP", little-endian):
//   magic "CXRP" | version u32 = 1 | labels u32 | dim u32
//   labels x (u32 byte length, UTF-8 name)
//   labels*dim f64 weights, row-major (one row per label)
//   labels f64 bias
// The full label-set metadata and the training provenance live in a JSON
// sidecar next to the weights file ("<path>.json").

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/embedding_store.hpp"
#include "core/metrics.hpp"
#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

enum class Optimizer { kSgd, kAdam };

std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kSgd;

  // Throws kInvalidArgument on a zero batch size, zero epochs or a
  // non-positive learning rate.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct GridSearchSpace {
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> epochs_options;
  std::vector<double> learning_rates;

  // 5 batch sizes x 3 epoch budgets x 3 learning rates.
  static GridSearchSpace reference();
  std::size_t size() const {
    return batch_sizes.size() * epochs_options.size() * learning_rates.size();
  }
};

GridSearchSpace grid_space_from_json(const nlohmann::json& j);

struct TrainProvenance {
  TrainConfig config;
  std::string dataset_fingerprint;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // full-frame loss after each epoch
};

struct ProbeWeights {
  std::shared_ptr<const LabelSet> label_set;
  std::size_t dim = 0;
  std::vector<double> weights;  // labels x dim, row-major
  std::vector<double> bias;     // labels
  TrainProvenance provenance;

  std::size_t labels() const { return bias.size(); }
  // Checks shapes and finiteness.
  void validate() const;
};

// Mean over elements of the logistic loss, computed as
// max(z, 0) - z*y + log1p(exp(-|z|)).
double bce_with_logits(std::span<const double> logits, std::span<const double> targets);
// d(mean loss)/d(logits) = (sigmoid(z) - y) / n.
std::vector<double> bce_with_logits_gradient(std::span<const double> logits,
                                             std::span<const double> targets);

double sigmoid(double z);

// Zero-initialized weights; the epoch order is reshuffled from the seed every
// epoch. Throws kDiverged naming the epoch when the loss becomes non-finite.
ProbeWeights train(const EmbeddingFrame& frame, const TrainConfig& config);

DetectionMap predict(const ProbeWeights& weights, std::span<const float> embedding);
DetectionMap predict(const ProbeWeights& weights, std::span<const double> embedding);
std::vector<DetectionMap> predict_frame(const ProbeWeights& weights,
                                        const EmbeddingFrame& frame);

// Mean loss of the probe over a frame.
double frame_loss(const ProbeWeights& weights, const EmbeddingFrame& frame);

struct ProbeEvaluation {
  AccuracyReport accuracy;
  AucReport auc;
  double top1 = 0.0;
  double threshold = kDefaultDecisionThreshold;
};

ProbeEvaluation evaluate_probe(const ProbeWeights& weights, const EmbeddingFrame& frame,
                               double threshold = kDefaultDecisionThreshold);

nlohmann::json to_json(const ProbeEvaluation& e);

enum class SelectionMetric { kExactMatch, kSingleMatch, kMacroAuc, kTopOne };

SelectionMetric parse_selection_metric(std::string_view name);
std::string_view selection_metric_name(SelectionMetric m);

struct LeaderboardEntry {
  TrainConfig config;
  double score = 0.0;        // selection metric on validation
  double exact_match = 0.0;  // validation exact match
  double final_loss = 0.0;   // training loss after the last epoch
};

struct GridSearchResult {
  TrainConfig best;
  std::vector<LeaderboardEntry> leaderboard;  // best first
  double exact_match_spread = 0.0;            // best - worst exact match
  SelectionMetric metric = SelectionMetric::kExactMatch;
};

// Trains one probe per configuration on `train_frame`, scores each on
// `val_frame`. Configuration i trains with seed mix_seed(seed, i). Ties are
// broken by smaller learning rate, then smaller batch, then fewer epochs.
// Results do not depend on `threads`.
GridSearchResult grid_search(const EmbeddingFrame& train_frame,
                             const EmbeddingFrame& val_frame,
                             const GridSearchSpace& space,
                             SelectionMetric metric = SelectionMetric::kExactMatch,
                             std::uint64_t seed = 0,
                             Optimizer optimizer = Optimizer::kSgd,
                             double threshold = kDefaultDecisionThreshold,
                             unsigned threads = 0);

nlohmann::json to_json(const GridSearchResult& r);
std::string leaderboard_table(const GridSearchResult& r);

std::string encode_weights(const ProbeWeights& weights);
// Label names only; the result's label set carries no subsets.
ProbeWeights decode_weights(std::string_view bytes);

nlohmann::json weights_sidecar(const ProbeWeights& weights);

// Writes `path` and `path`.json.
void save_weights(const std::filesystem::path& path, const ProbeWeights& weights);
// Reads `path` and, when present, the sidecar.
ProbeWeights load_weights(const std::filesystem::path& path);

}  // namespace cxr
