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

// End-to-end agent: probe detection -> suppression -> lateralization ->
// prompt -> generation, plus the localisation benchmark harness and batch
// execution over a dataset.

#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "core/embedding_store.hpp"
#include "core/error.hpp"
#include "core/generation.hpp"
#include "core/grounding.hpp"
#include "core/linear_probe.hpp"
#include "core/report_text.hpp"
#include "core/types.hpp"
#include "core/uncertainty.hpp"
#include "json.hpp"

namespace cxr {

// The 14 CheXpert observations with their default subsets: cardiac and
// mediastinal findings are not lateralized, support devices are suppressed.
LabelSet chexpert_label_set();

// Labels present in `labels` from the default non-lateralizable and
// suppressed lists.
std::set<std::string> default_non_lateralizable(const LabelSet& labels);
std::set<std::string> default_suppressed(const LabelSet& labels);

struct AgentConfig {
  std::filesystem::path probe_weights;  // empty: detection unavailable
  std::filesystem::path grounding_fixture;
  std::string grounding_endpoint;
  std::chrono::milliseconds grounding_timeout{10000};
  CentroidConvention centroid_convention = CentroidConvention::kAsReported;
  std::string engine_id = "template-stub";
  std::filesystem::path engines_registry;  // empty: built-in presets only
  PromptBands bands;
  double decision_threshold = kDefaultDecisionThreshold;
  std::optional<std::set<std::string>> non_lateralizable;
  std::optional<std::set<std::string>> suppressed;
  std::filesystem::path synonyms;
  std::string user_prompt = "findings";
  unsigned threads = 0;  // batch workers, 0 = hardware concurrency

  // Thresholds and band tables; exactly one grounding source.
  void validate() const;
};

// Relative paths resolve against `base_dir`.
AgentConfig agent_config_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});
AgentConfig load_agent_config(const std::filesystem::path& path);
nlohmann::json to_json(const AgentConfig& c);

struct RunTrace {
  std::string image_id;
  std::string user_prompt;
  std::optional<DetectionMap> detections;
  Findings probe_positive;  // scores at or above the decision threshold
  std::vector<std::string> survivors;        // most confident first
  std::vector<std::string> suppressed;       // configured suppression
  std::vector<std::string> below_floor;
  std::vector<GroundingOutcome> outcomes;
  std::optional<PromptBundle> bundle;
  std::optional<FindingsReport> report;
  std::optional<TemporalFlag> temporal;
};

nlohmann::json to_json(const RunTrace& t);

struct ListingRun {
  ExtractionResult extraction;
  RunTrace trace;
};

// Two-option localisation task. `answer` is 1 or 2. Cases whose pathology the
// detector did not report ("detected": false) are counted, not grounded.
struct LocalisationCase {
  std::string case_id;
  std::string question;
  std::string option_1;
  std::string option_2;
  std::string image_ref;
  int answer = 1;
  bool detected = true;
};

std::vector<LocalisationCase> localisation_cases_from_json(const nlohmann::json& j);
std::vector<LocalisationCase> load_localisation_cases(const std::filesystem::path& path);

enum class LocalisationStrategy { kTwoOption, kPosition };
LocalisationStrategy parse_localisation_strategy(std::string_view name);
std::string_view localisation_strategy_name(LocalisationStrategy s);

// The side-free phrase of an option ("left pleural effusion" -> "pleural
// effusion") and its side; kAbstain when the option names no side.
std::pair<std::string, Side> strip_side(std::string_view option);

struct LocalisationDecision {
  std::string case_id;
  std::optional<int> chosen;  // absent when abstained or undetected
  bool correct = false;
  bool undetected = false;
};

struct LocalisationReport {
  LocalisationStrategy strategy = LocalisationStrategy::kTwoOption;
  std::size_t total = 0;
  std::size_t decided = 0;
  std::size_t correct = 0;
  std::size_t abstained = 0;
  std::size_t undetected = 0;
  std::optional<double> decided_accuracy;  // absent when nothing was decided
  double overall_accuracy = 0.0;           // correct / total
  std::vector<LocalisationDecision> decisions;
};

nlohmann::json to_json(const LocalisationReport& r);
std::string localisation_table(const LocalisationReport& r);

// Throws kInvalidArgument on an empty case list.
LocalisationReport run_localisation_benchmark(
    GroundingBackend& grounder, const std::vector<LocalisationCase>& cases,
    LocalisationStrategy strategy,
    CentroidConvention convention = CentroidConvention::kAsReported);

class Agent {
 public:
  // Any of the components may be null; operations that need a missing one
  // throw kInvalidArgument.
  Agent(AgentConfig config, std::shared_ptr<const ProbeWeights> probe,
        std::shared_ptr<GroundingBackend> grounder,
        std::shared_ptr<GenerationBackend> generator, EngineConfig engine,
        SynonymTable synonyms = {});

  // Loads every referenced resource; failures name the resource.
  static Agent from_config(const AgentConfig& config);

  const AgentConfig& config() const { return config_; }
  const EngineConfig& engine() const { return engine_; }
  std::shared_ptr<const LabelSet> label_set() const { return labels_; }
  const SynonymTable& synonyms() const { return synonyms_; }

  // Errors are rethrown with the failing stage in the message
  // ("[grounding] ...") and their original code.
  RunTrace run_findings(std::string_view image_id, std::span<const float> embedding,
                        std::string_view user_prompt) const;
  ListingRun run_detection_listing(std::string_view image_id,
                                   std::span<const float> embedding) const;
  LocalisationReport run_localisation_benchmark(const std::vector<LocalisationCase>& cases,
                                                LocalisationStrategy strategy) const;

 private:
  AgentConfig config_;
  std::shared_ptr<const ProbeWeights> probe_;
  std::shared_ptr<const LabelSet> labels_;
  std::shared_ptr<GroundingBackend> grounder_;
  std::shared_ptr<GenerationBackend> generator_;
  EngineConfig engine_;
  SynonymTable synonyms_;
};

struct BatchFailure {
  std::string image_id;
  ErrorCode code = ErrorCode::kInternal;
  std::string message;
};

struct BatchSummary {
  std::size_t cases = 0;
  std::size_t succeeded = 0;
  std::vector<BatchFailure> failures;
  // Against the record labels over successful runs: the pathologies extracted
  // from each report, and the thresholded probe output.
  std::optional<AccuracyReport> accuracy;
  std::optional<AccuracyReport> probe_accuracy;
  std::size_t temporal_flagged = 0;
};

nlohmann::json to_json(const BatchSummary& s);

// Runs every record of `frame` in parallel and writes <id>.report.txt and
// <id>.trace.json under `out_dir` (ids are made filesystem-safe), plus
// summary.json. A failing case is recorded and does not stop the batch.
BatchSummary run_batch(const Agent& agent, const EmbeddingFrame& frame,
                       const std::filesystem::path& out_dir, std::string_view user_prompt);

std::string safe_file_stem(std::string_view image_id);

// Deterministic synthetic world for offline runs: an identity-like probe
// whose scores equal the planted ones up to float rounding, a grounding stub
// consistent with planted sides, and the matching dataset.
struct SyntheticWorld {
  ProbeWeights probe;
  EmbeddingFrame frame;
  nlohmann::json grounding_fixture;
  std::vector<std::map<std::string, Side>> planted_sides;
};

SyntheticWorld synthesize_world(std::size_t cases, std::uint64_t seed,
                                const LabelSet& labels = chexpert_label_set());

// Writes probe.bin (+ sidecar), manifest.json, embeddings.cxre, grounding.json
// and agent.json into `dir`.
void write_synthetic_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace cxr
