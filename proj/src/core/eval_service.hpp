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

// Blind clinical evaluation: sessions with per-case anonymized model order,
// validated score submissions and aggregation.
//
// Persistence is an append-only log, one JSON document per line:
//   {"type": "session", "session_id", "rater_id", "seed", "created_at",
//    "assignments": [{"case_id", "permutation": [model_id by slot]}]}
//   {"type": "submission", ...submission fields..., "resolved": [...]}
// The log is replayed on open; a later submission for the same
// (session, case) replaces an earlier one.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "core/metrics.hpp"
#include "json.hpp"

namespace cxr {

enum class DatasetTag { kMimic, kChexpert, kOther };
std::string_view dataset_tag_name(DatasetTag t);
DatasetTag parse_dataset_tag(std::string_view s);

struct CandidateReport {
  std::string model_id;
  std::string text;
};

struct EvaluationCase {
  std::string case_id;
  std::string image_uri;
  std::optional<std::string> reference_report;
  std::vector<CandidateReport> candidates;
  DatasetTag dataset_tag = DatasetTag::kOther;
};

// Array of cases or {"cases": [...]}. Throws kValidation for fewer than two
// candidates, repeated model ids within a case or repeated case ids.
std::vector<EvaluationCase> evaluation_cases_from_json(const nlohmann::json& j);
std::vector<EvaluationCase> load_evaluation_cases(const std::filesystem::path& path);

struct AnonymizedAssignment {
  std::string case_id;
  std::string session_id;
  std::vector<std::string> permutation;  // slot (0-based) -> model_id
};

struct Session {
  std::string session_id;
  std::string rater_id;
  std::uint64_t seed = 0;
  std::string created_at;
  std::vector<AnonymizedAssignment> assignments;  // in presentation order
};

// Scores for one display slot; slots are numbered from 1.
struct SlotScore {
  int slot = 0;
  int rank = 0;
  std::optional<std::string> rubric_letter;  // only for cases with a reference
  std::string brevity;
  int accuracy = 0;
  bool dangerous = false;
  bool temporal_hallucination = false;
};

struct Submission {
  std::string session_id;
  std::string case_id;
  std::string rater_id;
  std::vector<SlotScore> slots;
  bool abnormal = false;
  std::string submitted_at;  // assigned by the service
};

// A slot score attributed to its model.
struct ResolvedScore {
  std::string model_id;
  int rank = 0;
  std::optional<int> rubric;
  int brevity = 0;
  int accuracy = 0;
  bool dangerous = false;
  bool temporal_hallucination = false;
};

struct StoredSubmission {
  Submission submission;
  std::vector<ResolvedScore> resolved;
  DatasetTag dataset_tag = DatasetTag::kOther;
};

struct SubmissionAck {
  std::string session_id;
  std::string case_id;
  std::string submitted_at;
  bool replaced = false;
};

// What a rater sees for one case. Carries no model identities.
struct CaseView {
  std::string session_id;
  std::size_t index = 0;  // 1-based
  std::size_t total = 0;
  std::string case_id;
  std::string image_uri;
  std::optional<std::string> reference_report;
  std::vector<std::string> slot_labels;  // "Model 1".."Model n"
  std::vector<std::string> slot_texts;
  std::vector<std::string> score_fields;
  std::vector<std::string> rubric_letters;
  std::vector<std::string> brevity_tags;
  std::optional<nlohmann::json> draft;  // the rater's latest submission
};

nlohmann::json to_json(const CaseView& v);

struct ResultsFilter {
  std::optional<DatasetTag> dataset;
  std::optional<bool> abnormal;
  std::optional<std::string> rater_id;
  std::optional<std::string> session_id;
};

struct ModelAggregate {
  std::string model_id;
  std::size_t scores = 0;
  std::size_t raters = 0;
  std::optional<double> rubric_mean;         // over scores carrying a rubric
  std::optional<double> superior_or_similar; // fraction of rubric scores >= 0
  std::size_t rubric_scores = 0;
  double brevity_mean = 0.0;
  double accuracy_mean = 0.0;
  double rank_score_mean = 0.0;
  std::size_t dangerous = 0;
  std::size_t temporal = 0;
  double dangerous_per_rater = 0.0;
  double temporal_per_rater = 0.0;
};

struct ResultsGroup {
  std::string dataset;  // "all" or a dataset tag
  std::string subset;   // "all", "normal" or "abnormal"
  std::size_t submissions = 0;
  std::vector<ModelAggregate> models;  // by model id
};

struct ResultsExport {
  std::size_t submissions = 0;
  std::vector<ResultsGroup> groups;  // non-empty groups only
};

nlohmann::json to_json(const ResultsExport& r);
std::string results_table(const ResultsExport& r);

// Aggregation over resolved submissions; throws kNotFound when `subs` is
// empty.
ResultsExport aggregate_results(const std::vector<StoredSubmission>& subs,
                                const RubricMaps& maps);

class EvalService {
 public:
  // Replays `log_path` when it exists; an empty path keeps everything in
  // memory.
  EvalService(std::vector<EvaluationCase> cases, std::filesystem::path log_path = {},
              RubricMaps maps = {});

  // Empty `case_ids` means every case in file order. Throws kNotFound for an
  // unknown case and kValidation for a case with fewer than two models.
  Session create_session(const std::vector<std::string>& case_ids, const std::string& rater_id,
                         std::uint64_t seed);
  Session session(const std::string& session_id) const;
  CaseView case_view(const std::string& session_id, std::size_t index) const;
  SubmissionAck submit(Submission submission);
  ResultsExport export_results(const ResultsFilter& filter = {}) const;

  const RubricMaps& maps() const { return maps_; }
  std::vector<StoredSubmission> submissions() const;
  const EvaluationCase& evaluation_case(const std::string& case_id) const;
  std::size_t case_count() const { return cases_.size(); }

 private:
  const Session& session_locked(const std::string& session_id) const;
  std::vector<ResolvedScore> resolve(const Submission& s, const AnonymizedAssignment& a,
                                     const EvaluationCase& c) const;
  void append(const nlohmann::json& record);
  void replay();

  std::vector<EvaluationCase> cases_;
  std::map<std::string, std::size_t> case_index_;
  std::filesystem::path log_path_;
  RubricMaps maps_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Session> sessions_;
  // (session_id, case_id) -> latest submission
  std::map<std::pair<std::string, std::string>, StoredSubmission> submissions_;
  std::ofstream log_;
};

nlohmann::json to_json(const Session& s);
nlohmann::json to_json(const Submission& s);
Submission submission_from_json(const nlohmann::json& j);

}  // namespace cxr
