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

// Shared domain vocabulary: label sets, confidences, detection maps, scan
// records and generated reports.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cxr {

// An unordered set of pathology labels, e.g. a reference or a prediction.
using Findings = std::set<std::string>;

// Ordered pathology vocabulary. The order defines the probe output neurons.
class LabelSet {
 public:
  LabelSet() = default;

  // Validates uniqueness and that every designated subset is drawn from
  // `labels`. Throws Error(kInvalidArgument) otherwise.
  LabelSet(std::string name, std::vector<std::string> labels,
           std::optional<std::string> no_finding_label = std::nullopt,
           std::set<std::string> non_lateralizable = {},
           std::set<std::string> suppressed = {});

  const std::string& name() const { return name_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::optional<std::string>& no_finding_label() const {
    return no_finding_label_;
  }
  const std::set<std::string>& non_lateralizable() const {
    return non_lateralizable_;
  }
  const std::set<std::string>& suppressed() const { return suppressed_; }

  std::size_t size() const { return labels_.size(); }
  bool contains(std::string_view label) const;
  // Index of `label` in output order; throws kNotFound for unknown labels.
  std::size_t index_of(std::string_view label) const;
  bool is_no_finding(std::string_view label) const;
  bool is_suppressed(std::string_view label) const;
  bool is_lateralizable(std::string_view label) const;

  // Same vocabulary with replaced subsets (used for config overrides).
  LabelSet with_overrides(std::optional<std::set<std::string>> non_lateralizable,
                          std::optional<std::set<std::string>> suppressed) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::string name_;
  std::vector<std::string> labels_;
  std::optional<std::string> no_finding_label_;
  std::set<std::string> non_lateralizable_;
  std::set<std::string> suppressed_;
};

// A probability in [0, 1].
class ConfidenceScore {
 public:
  constexpr ConfidenceScore() = default;
  explicit ConfidenceScore(double value);

  double value() const { return value_; }
  friend auto operator<=>(const ConfidenceScore&, const ConfidenceScore&) = default;

 private:
  double value_ = 0.0;
};

// Per-label confidences, total over the label set.
class DetectionMap {
 public:
  DetectionMap(std::shared_ptr<const LabelSet> label_set,
               std::vector<double> scores);

  const LabelSet& label_set() const { return *label_set_; }
  std::shared_ptr<const LabelSet> label_set_ptr() const { return label_set_; }
  std::span<const double> scores() const { return scores_; }
  ConfidenceScore score(std::string_view label) const;
  ConfidenceScore score_at(std::size_t index) const {
    return ConfidenceScore(scores_.at(index));
  }

 private:
  std::shared_ptr<const LabelSet> label_set_;
  std::vector<double> scores_;
};

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ScanRecord {
  std::string image_id;
  std::optional<Split> split;
  std::vector<std::uint8_t> labels;  // aligned to a LabelSet, entries 0/1
  std::optional<std::string> image_uri;

  friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

// Positive labels of a record, excluding the no-finding label.
Findings positive_findings(const ScanRecord& record, const LabelSet& labels);

struct FindingsReport {
  std::string text;
  std::string engine_id;
  std::string scan;
  std::string prompt_fingerprint;
};

// True iff every pathology (non no-finding) score is below `threshold`.
bool is_no_finding(const DetectionMap& detections, double threshold);

// Labels scoring at or above `threshold`, excluding the no-finding label.
Findings binary_prediction_set(const DetectionMap& detections, double threshold);

inline constexpr double kDefaultDecisionThreshold = 0.5;

}  // namespace cxr
