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

#include "core/eval_service.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json resolved_to_json(const ResolvedScore& r) {
  return json{{"model_id", r.model_id},
              {"rank", r.rank},
              {"rubric", r.rubric ? json(*r.rubric) : json(nullptr)},
              {"brevity", r.brevity},
              {"accuracy", r.accuracy},
              {"dangerous", r.dangerous},
              {"temporal_hallucination", r.temporal_hallucination}};
}

ResolvedScore resolved_from_json(const json& j) {
  ResolvedScore r;
  r.model_id = j.at("model_id").get<std::string>();
  r.rank = j.at("rank").get<int>();
  if (!j.at("rubric").is_null()) r.rubric = j["rubric"].get<int>();
  r.brevity = j.at("brevity").get<int>();
  r.accuracy = j.at("accuracy").get<int>();
  r.dangerous = j.at("dangerous").get<bool>();
  r.temporal_hallucination = j.at("temporal_hallucination").get<bool>();
  return r;
}

std::vector<std::string> map_keys(const std::map<std::string, int>& m) {
  std::vector<std::string> out;
  for (const auto& [k, _] : m) out.push_back(k);
  return out;
}

}  // namespace

std::string_view dataset_tag_name(DatasetTag t) {
  switch (t) {
    case DatasetTag::kMimic: return "mimic";
    case DatasetTag::kChexpert: return "chexpert";
    case DatasetTag::kOther: return "other";
  }
  return "other";
}

DatasetTag parse_dataset_tag(std::string_view s) {
  const auto l = to_lower(s);
  if (l == "mimic") return DatasetTag::kMimic;
  if (l == "chexpert") return DatasetTag::kChexpert;
  if (l == "other") return DatasetTag::kOther;
  fail(ErrorCode::kInvalidArgument, "unknown dataset tag '" + std::string(s) + "'");
}

std::vector<EvaluationCase> evaluation_cases_from_json(const json& j) {
  const json& arr = j.is_object() && j.contains("cases") ? j["cases"] : j;
  if (!arr.is_array()) fail(ErrorCode::kFormat, "evaluation cases: expected an array");
  std::vector<EvaluationCase> out;
  std::set<std::string> ids;
  try {
    for (const auto& e : arr) {
      EvaluationCase c;
      c.case_id = e.at("case_id").get<std::string>();
      c.image_uri = e.value("image_uri", std::string{});
      if (e.contains("reference_report") && !e["reference_report"].is_null())
        c.reference_report = e["reference_report"].get<std::string>();
      c.dataset_tag = parse_dataset_tag(e.value("dataset_tag", std::string("other")));
      std::set<std::string> models;
      for (const auto& r : e.at("candidate_reports")) {
        c.candidates.push_back(
            {r.at("model_id").get<std::string>(), r.at("text").get<std::string>()});
        if (!models.insert(c.candidates.back().model_id).second)
          fail(ErrorCode::kValidation,
               "case " + c.case_id + " repeats model '" + c.candidates.back().model_id + "'");
      }
      if (c.candidates.size() < 2)
        fail(ErrorCode::kValidation,
             "case " + c.case_id + " needs at least two candidate reports to be blinded");
      if (!ids.insert(c.case_id).second)
        fail(ErrorCode::kValidation, "case id '" + c.case_id + "' is repeated");
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("evaluation cases: ") + e.what());
  }
  return out;
}

std::vector<EvaluationCase> load_evaluation_cases(const std::filesystem::path& path) {
  try {
    return evaluation_cases_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "evaluation cases '" + path.string() + "': " + e.what());
  }
}

json to_json(const CaseView& v) {
  json slots = json::array();
  for (std::size_t i = 0; i < v.slot_labels.size(); ++i)
    slots.push_back({{"slot", i + 1}, {"label", v.slot_labels[i]}, {"text", v.slot_texts[i]}});
  return json{{"session_id", v.session_id},
              {"index", v.index},
              {"total", v.total},
              {"case_id", v.case_id},
              {"image_uri", v.image_uri},
              {"reference_report", v.reference_report ? json(*v.reference_report) : json(nullptr)},
              {"slots", slots},
              {"score_fields", v.score_fields},
              {"rubric_letters", v.rubric_letters},
              {"brevity_tags", v.brevity_tags},
              {"draft", v.draft ? *v.draft : json(nullptr)}};
}

json to_json(const Session& s) {
  json assignments = json::array();
  for (const auto& a : s.assignments)
    assignments.push_back({{"case_id", a.case_id}, {"permutation", a.permutation}});
  return json{{"session_id", s.session_id},
              {"rater_id", s.rater_id},
              {"seed", s.seed},
              {"created_at", s.created_at},
              {"assignments", assignments}};
}

json to_json(const Submission& s) {
  json slots = json::array();
  for (const auto& x : s.slots)
    slots.push_back({{"slot", x.slot},
                     {"rank", x.rank},
                     {"rubric", x.rubric_letter ? json(*x.rubric_letter) : json(nullptr)},
                     {"brevity", x.brevity},
                     {"accuracy", x.accuracy},
                     {"dangerous", x.dangerous},
                     {"temporal_hallucination", x.temporal_hallucination}});
  return json{{"session_id", s.session_id}, {"case_id", s.case_id},
              {"rater_id", s.rater_id},     {"slots", slots},
              {"abnormal", s.abnormal},     {"submitted_at", s.submitted_at}};
}

Submission submission_from_json(const json& j) {
  Submission s;
  try {
    s.session_id = j.value("session_id", std::string{});
    s.case_id = j.value("case_id", std::string{});
    s.rater_id = j.value("rater_id", std::string{});
    s.abnormal = j.value("abnormal", false);
    s.submitted_at = j.value("submitted_at", std::string{});
    for (const auto& x : j.at("slots")) {
      SlotScore sc;
      sc.slot = x.at("slot").get<int>();
      sc.rank = x.at("rank").get<int>();
      if (x.contains("rubric") && !x["rubric"].is_null())
        sc.rubric_letter = x["rubric"].get<std::string>();
      sc.brevity = x.at("brevity").get<std::string>();
      sc.accuracy = x.at("accuracy").get<int>();
      sc.dangerous = x.value("dangerous", false);
      sc.temporal_hallucination = x.value("temporal_hallucination", false);
      s.slots.push_back(std::move(sc));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, std::string("submission: ") + e.what());
  }
  return s;
}

EvalService::EvalService(std::vector<EvaluationCase> cases, std::filesystem::path log_path,
                         RubricMaps maps)
    : cases_(std::move(cases)), log_path_(std::move(log_path)), maps_(std::move(maps)) {
  for (std::size_t i = 0; i < cases_.size(); ++i) {
    if (cases_[i].candidates.size() < 2)
      fail(ErrorCode::kValidation, "case " + cases_[i].case_id + " has fewer than two models");
    if (!case_index_.emplace(cases_[i].case_id, i).second)
      fail(ErrorCode::kValidation, "case id '" + cases_[i].case_id + "' is repeated");
  }
  if (log_path_.empty()) return;
  if (std::filesystem::exists(log_path_)) replay();
  log_.open(log_path_, std::ios::binary | std::ios::app);
  if (!log_) fail(ErrorCode::kIo, "cannot open log '" + log_path_.string() + "'");
}

const EvaluationCase& EvalService::evaluation_case(const std::string& case_id) const {
  auto it = case_index_.find(case_id);
  if (it == case_index_.end()) fail(ErrorCode::kNotFound, "unknown case '" + case_id + "'");
  return cases_[it->second];
}

void EvalService::replay() {
  const std::string text = read_file(log_path_);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = log_path_.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "session") {
        Session s;
        s.session_id = j.at("session_id").get<std::string>();
        s.rater_id = j.at("rater_id").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.created_at = j.value("created_at", std::string{});
        for (const auto& a : j.at("assignments")) {
          AnonymizedAssignment as{a.at("case_id").get<std::string>(), s.session_id,
                                  a.at("permutation").get<std::vector<std::string>>()};
          evaluation_case(as.case_id);
          s.assignments.push_back(std::move(as));
        }
        sessions_[s.session_id] = std::move(s);
      } else if (type == "submission") {
        StoredSubmission st;
        st.submission = submission_from_json(j);
        st.dataset_tag = evaluation_case(st.submission.case_id).dataset_tag;
        for (const auto& r : j.at("resolved")) st.resolved.push_back(resolved_from_json(r));
        submissions_[{st.submission.session_id, st.submission.case_id}] = std::move(st);
      } else {
        fail(ErrorCode::kFormat, where + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, where + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kFormat, where + ": " + e.what());
    }
  }
}

void EvalService::append(const json& record) {
  if (log_path_.empty()) return;
  log_ << record.dump() << '\n';
  log_.flush();
  if (!log_) fail(ErrorCode::kIo, "cannot append to '" + log_path_.string() + "'");
}

Session EvalService::create_session(const std::vector<std::string>& case_ids,
                                    const std::string& rater_id, std::uint64_t seed) {
  if (trim(rater_id).empty()) fail(ErrorCode::kValidation, "rater id is empty");
  std::vector<std::string> ids = case_ids;
  if (ids.empty())
    for (const auto& c : cases_) ids.push_back(c.case_id);
  if (ids.empty()) fail(ErrorCode::kValidation, "no cases to evaluate");
  std::set<std::string> seen;
  for (const auto& id : ids) {
    const auto& c = evaluation_case(id);
    if (c.candidates.size() < 2)
      fail(ErrorCode::kValidation, "case " + id + " cannot be blinded with a single model");
    if (!seen.insert(id).second) fail(ErrorCode::kValidation, "case " + id + " listed twice");
  }

  std::unique_lock lock(mu_);
  Session s;
  s.rater_id = rater_id;
  s.seed = seed;
  s.created_at = utc_timestamp_now();
  for (std::uint64_t n = sessions_.size();; ++n) {
    s.session_id = "s-" + hex64(fnv1a(rater_id + "\x1f" + std::to_string(seed) + "\x1f" +
                                      std::to_string(n)))
                              .substr(0, 12);
    if (!sessions_.count(s.session_id)) break;
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& c = evaluation_case(ids[i]);
    std::vector<std::string> perm;
    for (const auto& cand : c.candidates) perm.push_back(cand.model_id);
    DeterministicRng rng(mix_seed(seed, i));
    rng.shuffle(perm);
    s.assignments.push_back({ids[i], s.session_id, std::move(perm)});
  }
  json record = to_json(s);
  record["type"] = "session";
  append(record);
  sessions_[s.session_id] = s;
  return s;
}

const Session& EvalService::session_locked(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) fail(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  return it->second;
}

Session EvalService::session(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  return session_locked(session_id);
}

CaseView EvalService::case_view(const std::string& session_id, std::size_t index) const {
  std::shared_lock lock(mu_);
  const auto& s = session_locked(session_id);
  if (index < 1 || index > s.assignments.size())
    fail(ErrorCode::kNotFound, "session " + session_id + " has no case " + std::to_string(index));
  const auto& a = s.assignments[index - 1];
  const auto& c = evaluation_case(a.case_id);

  CaseView v;
  v.session_id = session_id;
  v.index = index;
  v.total = s.assignments.size();
  v.case_id = c.case_id;
  v.image_uri = c.image_uri;
  v.reference_report = c.reference_report;
  for (std::size_t slot = 0; slot < a.permutation.size(); ++slot) {
    v.slot_labels.push_back("Model " + std::to_string(slot + 1));
    const auto it = std::find_if(c.candidates.begin(), c.candidates.end(),
                                 [&](const auto& r) { return r.model_id == a.permutation[slot]; });
    v.slot_texts.push_back(it->text);
  }
  v.score_fields = {"rank", "brevity", "accuracy", "dangerous", "temporal_hallucination"};
  if (c.reference_report) {
    v.score_fields.insert(v.score_fields.begin() + 1, "rubric");
    v.rubric_letters = map_keys(maps_.rubric);
  }
  v.score_fields.push_back("abnormal");
  v.brevity_tags = map_keys(maps_.brevity);
  auto sub = submissions_.find({session_id, c.case_id});
  if (sub != submissions_.end()) {
    json d = to_json(sub->second.submission);
    d.erase("rater_id");
    v.draft = d;
  }
  return v;
}

std::vector<ResolvedScore> EvalService::resolve(const Submission& s, const AnonymizedAssignment& a,
                                                const EvaluationCase& c) const {
  const std::size_t n = a.permutation.size();
  if (s.slots.size() != n)
    fail(ErrorCode::kValidation, "expected scores for " + std::to_string(n) + " slots, got " +
                                     std::to_string(s.slots.size()));
  std::vector<bool> slot_seen(n, false), rank_seen(n, false);
  std::vector<ResolvedScore> out;
  for (const auto& x : s.slots) {
    if (x.slot < 1 || static_cast<std::size_t>(x.slot) > n)
      fail(ErrorCode::kValidation, "unknown slot " + std::to_string(x.slot));
    if (slot_seen[x.slot - 1])
      fail(ErrorCode::kValidation, "slot " + std::to_string(x.slot) + " scored twice");
    slot_seen[x.slot - 1] = true;
    if (x.rank < 1 || static_cast<std::size_t>(x.rank) > n || rank_seen[x.rank - 1])
      fail(ErrorCode::kValidation, "ranks must be a permutation of 1.." + std::to_string(n));
    rank_seen[x.rank - 1] = true;

    ResolvedScore r;
    r.model_id = a.permutation[x.slot - 1];
    r.rank = x.rank;
    maps_.rank_score(x.rank);
    if (c.reference_report) {
      if (!x.rubric_letter)
        fail(ErrorCode::kValidation, "slot " + std::to_string(x.slot) + " needs a rubric letter");
      r.rubric = maps_.rubric_score(*x.rubric_letter);
    } else if (x.rubric_letter) {
      fail(ErrorCode::kValidation, "case " + c.case_id + " has no reference; rubric not allowed");
    }
    r.brevity = maps_.brevity_score(x.brevity);
    r.accuracy = maps_.accuracy_score(x.accuracy);
    r.dangerous = x.dangerous;
    r.temporal_hallucination = x.temporal_hallucination;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(),
            [](const ResolvedScore& a, const ResolvedScore& b) { return a.model_id < b.model_id; });
  return out;
}

SubmissionAck EvalService::submit(Submission submission) {
  std::unique_lock lock(mu_);
  const auto& s = session_locked(submission.session_id);
  if (!submission.rater_id.empty() && submission.rater_id != s.rater_id)
    fail(ErrorCode::kValidation, "session " + s.session_id + " belongs to another rater");
  submission.rater_id = s.rater_id;
  const auto a = std::find_if(s.assignments.begin(), s.assignments.end(),
                              [&](const auto& x) { return x.case_id == submission.case_id; });
  if (a == s.assignments.end())
    fail(ErrorCode::kNotFound,
         "case '" + submission.case_id + "' is not part of session " + s.session_id);
  const auto& c = evaluation_case(submission.case_id);

  StoredSubmission st;
  st.resolved = resolve(submission, *a, c);
  st.dataset_tag = c.dataset_tag;
  submission.submitted_at = utc_timestamp_now();
  std::sort(submission.slots.begin(), submission.slots.end(),
            [](const SlotScore& x, const SlotScore& y) { return x.slot < y.slot; });
  st.submission = std::move(submission);

  json record = to_json(st.submission);
  record["type"] = "submission";
  json resolved = json::array();
  for (const auto& r : st.resolved) resolved.push_back(resolved_to_json(r));
  record["resolved"] = resolved;
  append(record);

  const std::pair key{st.submission.session_id, st.submission.case_id};
  const bool replaced = submissions_.count(key) > 0;
  SubmissionAck ack{st.submission.session_id, st.submission.case_id, st.submission.submitted_at,
                    replaced};
  submissions_[key] = std::move(st);
  return ack;
}

std::vector<StoredSubmission> EvalService::submissions() const {
  std::shared_lock lock(mu_);
  std::vector<StoredSubmission> out;
  for (const auto& [_, s] : submissions_) out.push_back(s);
  return out;
}

ResultsExport EvalService::export_results(const ResultsFilter& filter) const {
  std::vector<StoredSubmission> picked;
  for (auto& s : submissions()) {
    if (filter.dataset && s.dataset_tag != *filter.dataset) continue;
    if (filter.abnormal && s.submission.abnormal != *filter.abnormal) continue;
    if (filter.rater_id && s.submission.rater_id != *filter.rater_id) continue;
    if (filter.session_id && s.submission.session_id != *filter.session_id) continue;
    picked.push_back(std::move(s));
  }
  return aggregate_results(picked, maps_);
}

ResultsExport aggregate_results(const std::vector<StoredSubmission>& subs,
                                const RubricMaps& maps) {
  if (subs.empty()) fail(ErrorCode::kNotFound, "no submissions match the filter");
  ResultsExport out;
  out.submissions = subs.size();

  std::vector<std::string> datasets{"all"};
  for (DatasetTag t : {DatasetTag::kMimic, DatasetTag::kChexpert, DatasetTag::kOther})
    datasets.emplace_back(dataset_tag_name(t));
  for (const auto& dataset : datasets) {
    for (const std::string subset : {"all", "normal", "abnormal"}) {
      ResultsGroup g{dataset, subset, 0, {}};
      struct Acc {
        std::size_t n = 0, rubric_n = 0, superior = 0, dangerous = 0, temporal = 0;
        double rubric = 0, brevity = 0, accuracy = 0, rank = 0;
        std::set<std::string> raters;
      };
      std::map<std::string, Acc> acc;
      for (const auto& s : subs) {
        if (dataset != "all" && dataset_tag_name(s.dataset_tag) != dataset) continue;
        if (subset == "normal" && s.submission.abnormal) continue;
        if (subset == "abnormal" && !s.submission.abnormal) continue;
        ++g.submissions;
        for (const auto& r : s.resolved) {
          auto& a = acc[r.model_id];
          ++a.n;
          a.raters.insert(s.submission.rater_id);
          if (r.rubric) {
            ++a.rubric_n;
            a.rubric += *r.rubric;
            if (*r.rubric >= 0) ++a.superior;
          }
          a.brevity += r.brevity;
          a.accuracy += r.accuracy;
          a.rank += maps.rank_score(r.rank);
          a.dangerous += r.dangerous;
          a.temporal += r.temporal_hallucination;
        }
      }
      if (g.submissions == 0) continue;
      for (const auto& [model, a] : acc) {
        ModelAggregate m;
        m.model_id = model;
        m.scores = a.n;
        m.raters = a.raters.size();
        m.rubric_scores = a.rubric_n;
        if (a.rubric_n) {
          m.rubric_mean = a.rubric / a.rubric_n;
          m.superior_or_similar = static_cast<double>(a.superior) / a.rubric_n;
        }
        m.brevity_mean = a.brevity / a.n;
        m.accuracy_mean = a.accuracy / a.n;
        m.rank_score_mean = a.rank / a.n;
        m.dangerous = a.dangerous;
        m.temporal = a.temporal;
        m.dangerous_per_rater = static_cast<double>(a.dangerous) / m.raters;
        m.temporal_per_rater = static_cast<double>(a.temporal) / m.raters;
        g.models.push_back(std::move(m));
      }
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

json to_json(const ResultsExport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    json models = json::array();
    for (const auto& m : g.models)
      models.push_back({{"model_id", m.model_id},
                        {"scores", m.scores},
                        {"raters", m.raters},
                        {"rubric_mean", opt_json(m.rubric_mean)},
                        {"superior_or_similar", opt_json(m.superior_or_similar)},
                        {"rubric_scores", m.rubric_scores},
                        {"brevity_mean", m.brevity_mean},
                        {"accuracy_mean", m.accuracy_mean},
                        {"rank_score_mean", m.rank_score_mean},
                        {"dangerous", m.dangerous},
                        {"temporal", m.temporal},
                        {"dangerous_per_rater", m.dangerous_per_rater},
                        {"temporal_per_rater", m.temporal_per_rater}});
    groups.push_back({{"dataset", g.dataset},
                      {"subset", g.subset},
                      {"submissions", g.submissions},
                      {"models", models}});
  }
  return json{{"submissions", r.submissions}, {"groups", groups}};
}

std::string results_table(const ResultsExport& r) {
  TextTable t({"dataset", "subset", "model", "n", "rubric", "sup/sim", "brevity", "accuracy",
               "rank score", "dangerous/rater", "temporal/rater"});
  for (const auto& g : r.groups)
    for (const auto& m : g.models)
      t.add_row({g.dataset, g.subset, m.model_id, std::to_string(m.scores),
                 format_optional(m.rubric_mean, 2), format_optional(m.superior_or_similar, 2),
                 format_fixed(m.brevity_mean, 2), format_fixed(m.accuracy_mean, 2),
                 format_fixed(m.rank_score_mean, 2), format_fixed(m.dangerous_per_rater, 2),
                 format_fixed(m.temporal_per_rater, 2)});
  return t.render();
}

}  // namespace cxr
