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

#include "core/types.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace cxr {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kFormat: return "format_error";
    case ErrorCode::kConsistency: return "consistency_error";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kBackend: return "backend_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kRefusal: return "refusal";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kOverLength: return "over_length";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown";
}

namespace {

void check_subset(const std::set<std::string>& subset,
                  const std::vector<std::string>& labels, const char* what) {
  for (const auto& s : subset) {
    if (std::find(labels.begin(), labels.end(), s) == labels.end())
      fail(ErrorCode::kInvalidArgument,
           std::string(what) + " label '" + s + "' is not in the label set");
  }
}

}  // namespace

LabelSet::LabelSet(std::string name, std::vector<std::string> labels,
                   std::optional<std::string> no_finding_label,
                   std::set<std::string> non_lateralizable,
                   std::set<std::string> suppressed)
    : name_(std::move(name)),
      labels_(std::move(labels)),
      no_finding_label_(std::move(no_finding_label)),
      non_lateralizable_(std::move(non_lateralizable)),
      suppressed_(std::move(suppressed)) {
  require(!labels_.empty(), "label set '" + name_ + "' has no labels");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    require(!l.empty(), "label set '" + name_ + "' contains an empty label");
    require(seen.insert(l).second,
            "label set '" + name_ + "' repeats label '" + l + "'");
  }
  if (no_finding_label_) {
    require(seen.count(*no_finding_label_) == 1,
            "no-finding label '" + *no_finding_label_ + "' is not in the label set");
  }
  check_subset(non_lateralizable_, labels_, "non-lateralizable");
  check_subset(suppressed_, labels_, "suppressed");
}

bool LabelSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::size_t LabelSet::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end())
    fail(ErrorCode::kNotFound, "unknown label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

bool LabelSet::is_no_finding(std::string_view label) const {
  return no_finding_label_ && *no_finding_label_ == label;
}

bool LabelSet::is_suppressed(std::string_view label) const {
  return suppressed_.count(std::string(label)) != 0;
}

bool LabelSet::is_lateralizable(std::string_view label) const {
  return !is_no_finding(label) && non_lateralizable_.count(std::string(label)) == 0;
}

LabelSet LabelSet::with_overrides(
    std::optional<std::set<std::string>> non_lateralizable,
    std::optional<std::set<std::string>> suppressed) const {
  return LabelSet(name_, labels_, no_finding_label_,
                  non_lateralizable ? *non_lateralizable : non_lateralizable_,
                  suppressed ? *suppressed : suppressed_);
}

ConfidenceScore::ConfidenceScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0))
    fail(ErrorCode::kInvalidArgument,
         "confidence " + std::to_string(value) + " is outside [0, 1]");
}

DetectionMap::DetectionMap(std::shared_ptr<const LabelSet> label_set,
                           std::vector<double> scores)
    : label_set_(std::move(label_set)), scores_(std::move(scores)) {
  require(label_set_ != nullptr, "detection map needs a label set");
  require(scores_.size() == label_set_->size(),
          "detection map has " + std::to_string(scores_.size()) +
              " scores for " + std::to_string(label_set_->size()) + " labels");
  for (double s : scores_) ConfidenceScore{s};
}

ConfidenceScore DetectionMap::score(std::string_view label) const {
  return ConfidenceScore(scores_[label_set_->index_of(label)]);
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kFormat, "unknown split '" + std::string(name) + "'");
}

Findings positive_findings(const ScanRecord& record, const LabelSet& labels) {
  Findings out;
  for (std::size_t i = 0; i < labels.size() && i < record.labels.size(); ++i) {
    if (record.labels[i] && !labels.is_no_finding(labels.labels()[i]))
      out.insert(labels.labels()[i]);
  }
  return out;
}

bool is_no_finding(const DetectionMap& detections, double threshold) {
  return binary_prediction_set(detections, threshold).empty();
}

Findings binary_prediction_set(const DetectionMap& detections, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0,
          "threshold must lie in [0, 1]");
  const auto& ls = detections.label_set();
  Findings out;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto& label = ls.labels()[i];
    if (ls.is_no_finding(label)) continue;
    if (detections.scores()[i] >= threshold) out.insert(label);
  }
  return out;
}

}  // namespace cxr
