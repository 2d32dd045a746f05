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

#include "core/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/binary_io.hpp"
#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kWeightsMagic = {'C', 'X', 'R', 'P'};
constexpr std::uint32_t kWeightsVersion = 1;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

// Per-element logistic loss in log-sum-exp form.
double logistic_loss(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

}  // namespace

std::string_view optimizer_name(Optimizer o) {
  return o == Optimizer::kAdam ? "adam" : "sgd";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  fail(ErrorCode::kInvalidArgument, "unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "learning_rate must be a positive finite number");
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"optimizer", optimizer_name(c.optimizer)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.optimizer = parse_optimizer(j.value("optimizer", std::string("sgd")));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

GridSearchSpace GridSearchSpace::reference() {
  return GridSearchSpace{{64, 128, 256, 512, 1024}, {10, 20, 40}, {1e-5, 1e-4, 1e-3}};
}

GridSearchSpace grid_space_from_json(const json& j) {
  GridSearchSpace s;
  try {
    s.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
    s.epochs_options = j.at("epochs").get<std::vector<std::size_t>>();
    s.learning_rates = j.at("learning_rates").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("grid space: ") + e.what());
  }
  return s;
}

void ProbeWeights::validate() const {
  require(label_set != nullptr, "probe has no label set");
  require(bias.size() == label_set->size(), "probe bias does not match the label set");
  require(dim > 0, "probe dim must be positive");
  require(weights.size() == bias.size() * dim, "probe weight matrix has the wrong shape");
  for (double w : weights)
    if (!std::isfinite(w)) fail(ErrorCode::kFormat, "probe weights contain a non-finite value");
  for (double b : bias)
    if (!std::isfinite(b)) fail(ErrorCode::kFormat, "probe bias contains a non-finite value");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size())
    fail(ErrorCode::kInvalidArgument, "bce_with_logits: logits and targets differ in length");
  require(!logits.empty(), "bce_with_logits: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    require(targets[i] == 0.0 || targets[i] == 1.0, "bce_with_logits: targets must be 0/1");
    sum += logistic_loss(logits[i], targets[i]);
  }
  return sum / static_cast<double>(logits.size());
}

std::vector<double> bce_with_logits_gradient(std::span<const double> logits,
                                             std::span<const double> targets) {
  if (logits.size() != targets.size())
    fail(ErrorCode::kInvalidArgument, "bce_with_logits: logits and targets differ in length");
  require(!logits.empty(), "bce_with_logits: empty input");
  std::vector<double> g(logits.size());
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] = (sigmoid(logits[i]) - targets[i]) / n;
  return g;
}

namespace {

void forward(const ProbeWeights& w, std::span<const float> x, std::vector<double>& logits) {
  const std::size_t L = w.labels(), D = w.dim;
  logits.assign(L, 0.0);
  for (std::size_t k = 0; k < L; ++k) {
    const double* row = w.weights.data() + k * D;
    double z = w.bias[k];
    for (std::size_t d = 0; d < D; ++d) z += row[d] * static_cast<double>(x[d]);
    logits[k] = z;
  }
}

}  // namespace

double frame_loss(const ProbeWeights& weights, const EmbeddingFrame& frame) {
  require(frame.dim() == weights.dim, "frame dim does not match the probe");
  require(frame.rows() > 0, "frame is empty");
  const std::size_t L = weights.labels();
  std::vector<double> logits;
  double sum = 0.0;
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    forward(weights, frame.embeddings().row(i), logits);
    const auto& y = frame.record(i).labels;
    for (std::size_t k = 0; k < L; ++k) sum += logistic_loss(logits[k], y[k]);
  }
  return sum / static_cast<double>(frame.rows() * L);
}

ProbeWeights train(const EmbeddingFrame& frame, const TrainConfig& config) {
  config.validate();
  require(frame.rows() > 0, "cannot train on an empty frame");

  const std::size_t N = frame.rows(), D = frame.dim(), L = frame.label_set().size();
  ProbeWeights w;
  w.label_set = frame.manifest().label_set;
  w.dim = D;
  w.weights.assign(L * D, 0.0);
  w.bias.assign(L, 0.0);
  w.provenance.config = config;
  w.provenance.dataset_fingerprint = frame.fingerprint();

  std::vector<double> grad_w(L * D), grad_b(L);
  std::vector<double> m_w, v_w, m_b, v_b;
  if (config.optimizer == Optimizer::kAdam) {
    m_w.assign(L * D, 0.0);
    v_w.assign(L * D, 0.0);
    m_b.assign(L, 0.0);
    v_b.assign(L, 0.0);
  }
  std::uint64_t step = 0;

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  DeterministicRng rng(config.seed);
  std::vector<double> logits;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < N; start += config.batch_size) {
      const std::size_t end = std::min(N, start + config.batch_size);
      const double scale = 1.0 / static_cast<double>((end - start) * L);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto x = frame.embeddings().row(order[b]);
        const auto& y = frame.record(order[b]).labels;
        forward(w, x, logits);
        for (std::size_t k = 0; k < L; ++k) {
          const double g = (sigmoid(logits[k]) - static_cast<double>(y[k])) * scale;
          grad_b[k] += g;
          double* gw = grad_w.data() + k * D;
          for (std::size_t d = 0; d < D; ++d) gw[d] += g * static_cast<double>(x[d]);
        }
      }

      if (config.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < w.weights.size(); ++i)
          w.weights[i] -= config.learning_rate * grad_w[i];
        for (std::size_t k = 0; k < L; ++k) w.bias[k] -= config.learning_rate * grad_b[k];
      } else {
        ++step;
        const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
        auto update = [&](std::vector<double>& p, std::vector<double>& m,
                          std::vector<double>& v, const std::vector<double>& g) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEpsilon);
          }
        };
        update(w.weights, m_w, v_w, grad_w);
        update(w.bias, m_b, v_b, grad_b);
      }
    }

    const double loss = frame_loss(w, frame);
    if (!std::isfinite(loss))
      fail(ErrorCode::kDiverged, "training diverged at epoch " + std::to_string(epoch) +
                                     " (loss is not finite)");
    w.provenance.epoch_losses.push_back(loss);
  }
  w.provenance.final_loss = w.provenance.epoch_losses.back();
  w.validate();
  return w;
}

DetectionMap predict(const ProbeWeights& weights, std::span<const double> embedding) {
  if (embedding.size() != weights.dim)
    fail(ErrorCode::kInvalidArgument, "embedding has dim " + std::to_string(embedding.size()) +
                                          ", probe expects " + std::to_string(weights.dim));
  std::vector<double> scores(weights.labels());
  for (std::size_t k = 0; k < weights.labels(); ++k) {
    const double* row = weights.weights.data() + k * weights.dim;
    double z = weights.bias[k];
    for (std::size_t d = 0; d < weights.dim; ++d) z += row[d] * embedding[d];
    scores[k] = sigmoid(z);
  }
  return DetectionMap(weights.label_set, std::move(scores));
}

DetectionMap predict(const ProbeWeights& weights, std::span<const float> embedding) {
  std::vector<double> x(embedding.begin(), embedding.end());
  return predict(weights, std::span<const double>(x));
}

std::vector<DetectionMap> predict_frame(const ProbeWeights& weights,
                                        const EmbeddingFrame& frame) {
  std::vector<DetectionMap> out;
  out.reserve(frame.rows());
  for (std::size_t i = 0; i < frame.rows(); ++i)
    out.push_back(predict(weights, frame.embeddings().row(i)));
  return out;
}

ProbeEvaluation evaluate_probe(const ProbeWeights& weights, const EmbeddingFrame& frame,
                               double threshold) {
  require(frame.rows() > 0, "cannot evaluate on an empty frame");
  require(frame.label_set().labels() == weights.label_set->labels(),
          "frame and probe use different label sets");
  const auto detections = predict_frame(weights, frame);
  std::vector<Findings> preds, refs;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::uint8_t>> labels;
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    preds.push_back(binary_prediction_set(detections[i], threshold));
    refs.push_back(positive_findings(frame.record(i), frame.label_set()));
    scores.emplace_back(detections[i].scores().begin(), detections[i].scores().end());
    labels.push_back(frame.record(i).labels);
  }
  ProbeEvaluation e;
  e.threshold = threshold;
  e.accuracy = exact_match_accuracy(preds, refs);
  e.auc = roc_auc(scores, labels, frame.label_set().labels());
  e.top1 = top_k_accuracy(detections, refs, 1);
  return e;
}

json to_json(const ProbeEvaluation& e) {
  return json{{"threshold", e.threshold},
              {"accuracy", to_json(e.accuracy)},
              {"roc_auc", to_json(e.auc)},
              {"top1", e.top1}};
}

SelectionMetric parse_selection_metric(std::string_view name) {
  if (name == "exact_match") return SelectionMetric::kExactMatch;
  if (name == "single_match") return SelectionMetric::kSingleMatch;
  if (name == "macro_auc" || name == "roc_auc") return SelectionMetric::kMacroAuc;
  if (name == "top1") return SelectionMetric::kTopOne;
  fail(ErrorCode::kInvalidArgument, "unknown selection metric '" + std::string(name) + "'");
}

std::string_view selection_metric_name(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::kExactMatch: return "exact_match";
    case SelectionMetric::kSingleMatch: return "single_match";
    case SelectionMetric::kMacroAuc: return "macro_auc";
    case SelectionMetric::kTopOne: return "top1";
  }
  return "exact_match";
}

GridSearchResult grid_search(const EmbeddingFrame& train_frame,
                             const EmbeddingFrame& val_frame,
                             const GridSearchSpace& space, SelectionMetric metric,
                             std::uint64_t seed, Optimizer optimizer, double threshold,
                             unsigned threads) {
  if (space.size() == 0)
    fail(ErrorCode::kInvalidArgument, "grid search space is empty");
  require(val_frame.rows() > 0, "grid search needs a non-empty validation split");

  std::vector<TrainConfig> configs;
  for (auto batch : space.batch_sizes)
    for (auto epochs : space.epochs_options)
      for (auto lr : space.learning_rates) {
        TrainConfig c{batch, epochs, lr, mix_seed(seed, configs.size()), optimizer};
        c.validate();
        configs.push_back(c);
      }

  std::vector<LeaderboardEntry> entries(configs.size());
  parallel_for(configs.size(), threads, [&](std::size_t i) {
    const auto w = train(train_frame, configs[i]);
    const auto e = evaluate_probe(w, val_frame, threshold);
    LeaderboardEntry entry;
    entry.config = configs[i];
    entry.exact_match = e.accuracy.overall;
    entry.final_loss = w.provenance.final_loss;
    switch (metric) {
      case SelectionMetric::kExactMatch: entry.score = e.accuracy.overall; break;
      case SelectionMetric::kSingleMatch: entry.score = e.accuracy.single_match.value_or(0.0); break;
      case SelectionMetric::kMacroAuc: entry.score = e.auc.macro.value_or(0.0); break;
      case SelectionMetric::kTopOne: entry.score = e.top1; break;
    }
    entries[i] = entry;
  });

  std::stable_sort(entries.begin(), entries.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.config.learning_rate != b.config.learning_rate)
                       return a.config.learning_rate < b.config.learning_rate;
                     if (a.config.batch_size != b.config.batch_size)
                       return a.config.batch_size < b.config.batch_size;
                     return a.config.epochs < b.config.epochs;
                   });

  GridSearchResult r;
  r.metric = metric;
  r.best = entries.front().config;
  auto [lo, hi] = std::minmax_element(
      entries.begin(), entries.end(),
      [](const auto& a, const auto& b) { return a.exact_match < b.exact_match; });
  r.exact_match_spread = hi->exact_match - lo->exact_match;
  r.leaderboard = std::move(entries);
  return r;
}

json to_json(const GridSearchResult& r) {
  json board = json::array();
  for (const auto& e : r.leaderboard)
    board.push_back(json{{"config", to_json(e.config)},
                         {"score", e.score},
                         {"exact_match", e.exact_match},
                         {"final_loss", e.final_loss}});
  return json{{"metric", selection_metric_name(r.metric)},
              {"configurations", r.leaderboard.size()},
              {"best", to_json(r.best)},
              {"exact_match_spread", r.exact_match_spread},
              {"leaderboard", std::move(board)}};
}

std::string leaderboard_table(const GridSearchResult& r) {
  TextTable t({"Rank", "Batch", "Epochs", "LR", std::string(selection_metric_name(r.metric)),
               "Exact match", "Train loss"});
  for (std::size_t i = 0; i < r.leaderboard.size(); ++i) {
    const auto& e = r.leaderboard[i];
    char lr[32];
    std::snprintf(lr, sizeof lr, "%g", e.config.learning_rate);
    t.add_row({std::to_string(i + 1), std::to_string(e.config.batch_size),
               std::to_string(e.config.epochs), lr, format_fixed(e.score, 4),
               format_fixed(e.exact_match, 4), format_fixed(e.final_loss, 5)});
  }
  return t.render() + "exact match spread (best - worst): " +
         format_fixed(r.exact_match_spread, 4) + "\n";
}

std::string encode_weights(const ProbeWeights& w) {
  w.validate();
  ByteWriter out;
  out.bytes(std::string_view(kWeightsMagic.data(), 4));
  out.u32(kWeightsVersion);
  out.u32(static_cast<std::uint32_t>(w.labels()));
  out.u32(static_cast<std::uint32_t>(w.dim));
  for (const auto& name : w.label_set->labels()) {
    out.u32(static_cast<std::uint32_t>(name.size()));
    out.bytes(name);
  }
  for (double v : w.weights) out.f64(v);
  for (double v : w.bias) out.f64(v);
  return out.take();
}

ProbeWeights decode_weights(std::string_view bytes) {
  ByteReader in(bytes, "weights file");
  if (in.bytes(4) != std::string_view(kWeightsMagic.data(), 4))
    fail(ErrorCode::kFormat, "weights file: bad magic");
  const auto version = in.u32();
  if (version != kWeightsVersion)
    fail(ErrorCode::kFormat, "weights file: unsupported version " + std::to_string(version));
  const std::size_t L = in.u32();
  const std::size_t D = in.u32();
  if (L == 0 || D == 0) fail(ErrorCode::kFormat, "weights file: empty shape");
  std::vector<std::string> names;
  for (std::size_t k = 0; k < L; ++k) {
    const auto len = in.u32();
    names.emplace_back(in.bytes(len));
  }
  if (in.remaining() != (L * D + L) * 8)
    fail(ErrorCode::kFormat, "weights file: payload size does not match the header");
  ProbeWeights w;
  w.dim = D;
  w.weights.resize(L * D);
  for (auto& v : w.weights) v = in.f64();
  w.bias.resize(L);
  for (auto& v : w.bias) v = in.f64();
  try {
    w.label_set = std::make_shared<const LabelSet>("probe", std::move(names));
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, std::string("weights file: ") + e.what());
  }
  w.validate();
  return w;
}

json weights_sidecar(const ProbeWeights& w) {
  return json{{"label_set", label_set_to_json(*w.label_set)},
              {"provenance",
               {{"config", to_json(w.provenance.config)},
                {"dataset_fingerprint", w.provenance.dataset_fingerprint},
                {"final_loss", w.provenance.final_loss},
                {"epoch_losses", w.provenance.epoch_losses}}}};
}

void save_weights(const std::filesystem::path& path, const ProbeWeights& weights) {
  write_file(path, encode_weights(weights));
  write_file(sidecar_path(path), weights_sidecar(weights).dump(2) + "\n");
}

ProbeWeights load_weights(const std::filesystem::path& path) {
  auto w = decode_weights(read_file(path));
  const auto side = sidecar_path(path);
  if (!std::filesystem::exists(side)) return w;
  try {
    const auto j = json::parse(read_file(side));
    auto ls = label_set_from_json(j.at("label_set"));
    if (ls.labels() != w.label_set->labels())
      fail(ErrorCode::kConsistency, "weights sidecar label names differ from the weights file");
    w.label_set = std::make_shared<const LabelSet>(std::move(ls));
    const auto& p = j.at("provenance");
    w.provenance.config = train_config_from_json(p.at("config"));
    w.provenance.dataset_fingerprint = p.value("dataset_fingerprint", std::string{});
    w.provenance.final_loss = p.value("final_loss", 0.0);
    w.provenance.epoch_losses = p.value("epoch_losses", std::vector<double>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "weights sidecar '" + side.string() + "': " + e.what());
  }
  return w;
}

}  // namespace cxr
