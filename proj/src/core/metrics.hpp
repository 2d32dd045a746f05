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

// Quantitative evaluation: exact/single match accuracies with the
// no-finding / one / multiple pathology splits, ROC-AUC, top-k, ROUGE-L and
// the clinical score maps.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

// Splits are attributed by reference composition: an empty reference is a
// no-finding case, one label is a one-pathology case, otherwise multiple.
struct AccuracyReport {
  double overall = 0.0;
  // Absent when the split has no cases.
  std::optional<double> no_finding;
  std::optional<double> one_pathology;
  std::optional<double> multiple_pathology;
  // Absent when every reference is empty.
  std::optional<double> single_match;

  std::size_t cases = 0;
  std::size_t no_finding_cases = 0;
  std::size_t one_pathology_cases = 0;
  std::size_t multiple_pathology_cases = 0;
  std::size_t exact_hits = 0;
};

AccuracyReport exact_match_accuracy(const std::vector<Findings>& predictions,
                                    const std::vector<Findings>& references);

// sum |pred ∩ ref| / sum |ref|. Throws kInvalidArgument when every reference
// is empty (the ratio is undefined).
double single_match_accuracy(const std::vector<Findings>& predictions,
                             const std::vector<Findings>& references);

struct AucReport {
  std::vector<std::string> labels;
  // Absent for labels without both a positive and a negative case.
  std::vector<std::optional<double>> per_label;
  std::optional<double> macro;
};

// Mann-Whitney U / (n_pos * n_neg) with mid-ranks for ties, i.e.
// P(score_pos > score_neg) + 0.5 * P(tie).
std::optional<double> binary_auc(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels);

// scores and labels are case-major: scores[case][label].
AucReport roc_auc(const std::vector<std::vector<double>>& scores,
                  const std::vector<std::vector<std::uint8_t>>& labels,
                  std::vector<std::string> label_names = {});

// Fraction of cases whose k highest-scoring labels (ties broken by label
// order) all lie in the reference. An empty reference stands for the
// no-finding label alone.
double top_k_accuracy(const std::vector<DetectionMap>& detections,
                      const std::vector<Findings>& references, std::size_t k);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t lcs = 0;
};

// Lowercase, split on runs of non-alphanumeric characters.
std::vector<std::string> rouge_tokens(std::string_view text);
std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b);
RougeScore rouge_l(std::string_view candidate, std::string_view reference);

struct RubricLetter { std::string value; };
struct BrevityTag { std::string value; };
struct Rank { int value = 0; };
struct AccuracyGrade { int value = 0; };
using RawScore = std::variant<RubricLetter, BrevityTag, Rank, AccuracyGrade>;

// Clinical score maps. Defaults are the literal published tables; every
// lookup of an undeclared key throws kValidation.
struct RubricMaps {
  std::map<std::string, int> rubric{{"X", 0}, {"B2", -2}, {"B1", -1},
                                    {"C", 0}, {"A1", 1},  {"C2", 2}};
  std::map<std::string, int> brevity{{"too_concise", -1}, {"good", 0}, {"too_verbose", 1}};
  std::map<int, int> rank_to_score{{1, 3}, {2, 2}, {3, 1}, {4, 1}};
  int accuracy_min = 1;
  int accuracy_max = 5;

  int rubric_score(std::string_view letter) const;
  // Accepts "Too Concise", "too-concise" and "too_concise".
  int brevity_score(std::string_view tag) const;
  int rank_score(int rank) const;
  int accuracy_score(int grade) const;

  static std::string normalize_brevity(std::string_view tag);

  nlohmann::json to_json() const;
  static RubricMaps from_json(const nlohmann::json& j);
};

int apply_score_maps(const RubricMaps& maps, const RawScore& raw);

nlohmann::json to_json(const AccuracyReport& r);
nlohmann::json to_json(const AucReport& r);
nlohmann::json to_json(const RougeScore& r);

// Aligned plain-text table.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> headers) : headers_(std::move(headers)) {}
  void add_row(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  std::string render() const;

 private:
  std::vector<std::string> headers_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_fixed(double value, int digits = 3);
std::string format_optional(const std::optional<double>& value, int digits = 3);

// One-row table with the accuracy columns used for agent comparisons.
std::string accuracy_table(const std::vector<std::pair<std::string, AccuracyReport>>& rows);

}  // namespace cxr
