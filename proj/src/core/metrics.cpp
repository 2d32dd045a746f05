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

#include "core/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    fail(ErrorCode::kInvalidArgument, "predictions (" + std::to_string(a) +
                                          ") and references (" + std::to_string(b) +
                                          ") differ in length");
}

std::size_t intersection_size(const Findings& a, const Findings& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

AccuracyReport exact_match_accuracy(const std::vector<Findings>& predictions,
                                    const std::vector<Findings>& references) {
  check_lengths(predictions.size(), references.size());
  require(!references.empty(), "accuracy needs at least one case");

  AccuracyReport r;
  std::size_t nf_hits = 0, one_hits = 0, multi_hits = 0;
  std::size_t overlap = 0, ref_total = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& ref = references[i];
    const bool hit = predictions[i] == ref;
    r.exact_hits += hit;
    if (ref.empty()) {
      ++r.no_finding_cases;
      nf_hits += hit;
    } else if (ref.size() == 1) {
      ++r.one_pathology_cases;
      one_hits += hit;
    } else {
      ++r.multiple_pathology_cases;
      multi_hits += hit;
    }
    overlap += intersection_size(predictions[i], ref);
    ref_total += ref.size();
  }
  r.cases = references.size();
  r.overall = static_cast<double>(r.exact_hits) / static_cast<double>(r.cases);
  r.no_finding = ratio(nf_hits, r.no_finding_cases);
  r.one_pathology = ratio(one_hits, r.one_pathology_cases);
  r.multiple_pathology = ratio(multi_hits, r.multiple_pathology_cases);
  r.single_match = ratio(overlap, ref_total);
  return r;
}

double single_match_accuracy(const std::vector<Findings>& predictions,
                             const std::vector<Findings>& references) {
  check_lengths(predictions.size(), references.size());
  std::size_t overlap = 0, total = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    overlap += intersection_size(predictions[i], references[i]);
    total += references[i].size();
  }
  if (total == 0)
    fail(ErrorCode::kInvalidArgument,
         "single match accuracy is undefined when every reference is empty");
  return static_cast<double>(overlap) / static_cast<double>(total);
}

std::optional<double> binary_auc(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += (l != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled mid-ranks keep the rank sum integral.
  std::uint64_t pos_rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank_x2 = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mid-rank
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum_x2 += rank_x2;
    i = j;
  }
  const double u = static_cast<double>(pos_rank_sum_x2) / 2.0 -
                   static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

AucReport roc_auc(const std::vector<std::vector<double>>& scores,
                  const std::vector<std::vector<std::uint8_t>>& labels,
                  std::vector<std::string> label_names) {
  check_lengths(scores.size(), labels.size());
  AucReport r;
  const std::size_t n_labels = scores.empty() ? label_names.size() : scores.front().size();
  if (label_names.empty())
    for (std::size_t k = 0; k < n_labels; ++k) label_names.push_back(std::to_string(k));
  require(label_names.size() == n_labels, "auc: label name count mismatch");
  r.labels = std::move(label_names);

  std::vector<double> col_scores(scores.size());
  std::vector<std::uint8_t> col_labels(scores.size());
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < n_labels; ++k) {
    for (std::size_t c = 0; c < scores.size(); ++c) {
      require(scores[c].size() == n_labels && labels[c].size() == n_labels,
              "auc: ragged score/label rows");
      col_scores[c] = scores[c][k];
      col_labels[c] = labels[c][k];
    }
    auto auc = binary_auc(col_scores, col_labels);
    if (auc) {
      sum += *auc;
      ++defined;
    }
    r.per_label.push_back(auc);
  }
  if (defined > 0) r.macro = sum / static_cast<double>(defined);
  return r;
}

double top_k_accuracy(const std::vector<DetectionMap>& detections,
                      const std::vector<Findings>& references, std::size_t k) {
  check_lengths(detections.size(), references.size());
  require(k >= 1, "top-k needs k >= 1");
  require(!detections.empty(), "top-k needs at least one case");
  std::size_t hits = 0;
  for (std::size_t c = 0; c < detections.size(); ++c) {
    const auto& d = detections[c];
    const auto& ls = d.label_set();
    if (k > ls.size())
      fail(ErrorCode::kInvalidArgument, "k = " + std::to_string(k) +
                                            " exceeds the label count " +
                                            std::to_string(ls.size()));
    Findings ref = references[c];
    if (ref.empty() && ls.no_finding_label()) ref.insert(*ls.no_finding_label());

    std::vector<std::size_t> order(ls.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return d.scores()[a] > d.scores()[b];
    });
    bool all_in = true;
    for (std::size_t i = 0; i < k; ++i)
      all_in = all_in && ref.count(ls.labels()[order[i]]) != 0;
    hits += all_in;
  }
  return static_cast<double>(hits) / static_cast<double>(detections.size());
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  RougeScore s;
  s.lcs = lcs_length(cand, ref);
  if (!cand.empty()) s.precision = static_cast<double>(s.lcs) / static_cast<double>(cand.size());
  if (!ref.empty()) s.recall = static_cast<double>(s.lcs) / static_cast<double>(ref.size());
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

int RubricMaps::rubric_score(std::string_view letter) const {
  std::string key(trim(letter));
  for (auto& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto it = rubric.find(key);
  if (it == rubric.end())
    fail(ErrorCode::kValidation, "unknown rubric letter '" + std::string(letter) + "'");
  return it->second;
}

std::string RubricMaps::normalize_brevity(std::string_view tag) {
  std::string key = to_lower(trim(tag));
  for (auto& c : key)
    if (c == ' ' || c == '-') c = '_';
  return key;
}

int RubricMaps::brevity_score(std::string_view tag) const {
  auto it = brevity.find(normalize_brevity(tag));
  if (it == brevity.end())
    fail(ErrorCode::kValidation, "unknown brevity tag '" + std::string(tag) + "'");
  return it->second;
}

int RubricMaps::rank_score(int rank) const {
  auto it = rank_to_score.find(rank);
  if (it == rank_to_score.end())
    fail(ErrorCode::kValidation, "rank " + std::to_string(rank) + " has no score mapping");
  return it->second;
}

int RubricMaps::accuracy_score(int grade) const {
  if (grade < accuracy_min || grade > accuracy_max)
    fail(ErrorCode::kValidation, "accuracy " + std::to_string(grade) + " is outside " +
                                     std::to_string(accuracy_min) + ".." +
                                     std::to_string(accuracy_max));
  return grade;
}

json RubricMaps::to_json() const {
  json ranks = json::object();
  for (const auto& [k, v] : rank_to_score) ranks[std::to_string(k)] = v;
  return json{{"rubric", rubric},
              {"brevity", brevity},
              {"rank_to_score", ranks},
              {"accuracy_scale", {accuracy_min, accuracy_max}}};
}

RubricMaps RubricMaps::from_json(const json& j) {
  RubricMaps m;
  try {
    if (j.contains("rubric")) m.rubric = j["rubric"].get<std::map<std::string, int>>();
    if (j.contains("brevity")) {
      m.brevity.clear();
      for (const auto& [k, v] : j["brevity"].items())
        m.brevity[normalize_brevity(k)] = v.get<int>();
    }
    if (j.contains("rank_to_score")) {
      m.rank_to_score.clear();
      for (const auto& [k, v] : j["rank_to_score"].items())
        m.rank_to_score[std::stoi(k)] = v.get<int>();
    }
    if (j.contains("accuracy_scale")) {
      m.accuracy_min = j["accuracy_scale"].at(0).get<int>();
      m.accuracy_max = j["accuracy_scale"].at(1).get<int>();
    }
  } catch (const std::exception& e) {
    fail(ErrorCode::kFormat, std::string("score maps: ") + e.what());
  }
  return m;
}

int apply_score_maps(const RubricMaps& maps, const RawScore& raw) {
  struct Visitor {
    const RubricMaps& m;
    int operator()(const RubricLetter& x) const { return m.rubric_score(x.value); }
    int operator()(const BrevityTag& x) const { return m.brevity_score(x.value); }
    int operator()(const Rank& x) const { return m.rank_score(x.value); }
    int operator()(const AccuracyGrade& x) const { return m.accuracy_score(x.value); }
  };
  return std::visit(Visitor{maps}, raw);
}

namespace {
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

json to_json(const AccuracyReport& r) {
  return json{{"overall", r.overall},
              {"no_finding", opt(r.no_finding)},
              {"one_pathology", opt(r.one_pathology)},
              {"multiple_pathology", opt(r.multiple_pathology)},
              {"single_match", opt(r.single_match)},
              {"counts",
               {{"cases", r.cases},
                {"no_finding", r.no_finding_cases},
                {"one_pathology", r.one_pathology_cases},
                {"multiple_pathology", r.multiple_pathology_cases},
                {"exact_hits", r.exact_hits}}}};
}

json to_json(const AucReport& r) {
  json per = json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i) per[r.labels[i]] = opt(r.per_label[i]);
  return json{{"per_label", per}, {"macro", opt(r.macro)}};
}

json to_json(const RougeScore& r) {
  return json{{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"lcs", r.lcs}};
}

std::string TextTable::render() const {
  std::vector<std::size_t> width(headers_.size(), 0);
  auto grow = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i)
      width[i] = std::max(width[i], row[i].size());
  };
  grow(headers_);
  for (const auto& r : rows_) grow(r);

  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string cell = i < row.size() ? row[i] : "";
      out << cell << std::string(width[i] - cell.size(), ' ');
      if (i + 1 < width.size()) out << "  ";
    }
    out << '\n';
  };
  line(headers_);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows_) line(r);
  return out.str();
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string format_optional(const std::optional<double>& value, int digits) {
  return value ? format_fixed(*value, digits) : "-";
}

std::string accuracy_table(const std::vector<std::pair<std::string, AccuracyReport>>& rows) {
  TextTable t({"Model", "Overall", "No Finding", "One Pathology", "Multiple Pathology",
               "Single Match"});
  for (const auto& [name, r] : rows)
    t.add_row({name, format_fixed(r.overall), format_optional(r.no_finding),
               format_optional(r.one_pathology), format_optional(r.multiple_pathology),
               format_optional(r.single_match)});
  return t.render();
}

}  // namespace cxr
