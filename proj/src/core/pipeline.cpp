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

#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto staged(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "[" + std::string(stage) + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kInternal, "[" + std::string(stage) + "] " + e.what());
  }
}

template <typename Fn>
auto loading(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), what + ": " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::set<std::string> present(const LabelSet& labels, std::initializer_list<const char*> names) {
  std::set<std::string> out;
  for (const char* n : names)
    if (labels.contains(n)) out.insert(n);
  return out;
}

json findings_json(const Findings& f) { return json(std::vector<std::string>(f.begin(), f.end())); }

}  // namespace

LabelSet chexpert_label_set() {
  return LabelSet("chexpert",
                  {"No Finding", "Enlarged Cardiomediastinum", "Cardiomegaly", "Lung Opacity",
                   "Lung Lesion", "Edema", "Consolidation", "Pneumonia", "Atelectasis",
                   "Pneumothorax", "Pleural Effusion", "Pleural Other", "Fracture",
                   "Support Devices"},
                  "No Finding", {"Cardiomegaly", "Enlarged Cardiomediastinum"},
                  {"Support Devices"});
}

std::set<std::string> default_non_lateralizable(const LabelSet& labels) {
  return present(labels, {"Cardiomegaly", "Enlarged Cardiomediastinum"});
}

std::set<std::string> default_suppressed(const LabelSet& labels) {
  return present(labels, {"Support Devices"});
}

void AgentConfig::validate() const {
  bands.detector.validate();
  bands.grounder.validate();
  require(decision_threshold >= 0.0 && decision_threshold <= 1.0,
          "decision_threshold must lie in [0, 1]");
  require(grounding_fixture.empty() != grounding_endpoint.empty(),
          "configure exactly one grounding source (fixture or endpoint)");
  require(grounding_timeout.count() > 0, "grounding timeout must be positive");
  require(!engine_id.empty(), "engine_id is empty");
  require(!trim(user_prompt).empty(), "user_prompt is empty");
}

AgentConfig agent_config_from_json(const json& j, const fs::path& base_dir) {
  AgentConfig c;
  try {
    c.probe_weights = resolve(j.value("probe_weights", std::string{}), base_dir);
    if (j.contains("grounding")) {
      const auto& g = j["grounding"];
      c.grounding_fixture = resolve(g.value("fixture", std::string{}), base_dir);
      c.grounding_endpoint = g.value("endpoint", std::string{});
      c.grounding_timeout = std::chrono::milliseconds(g.value("timeout_ms", 10000));
      c.centroid_convention =
          parse_centroid_convention(g.value("centroid_convention", std::string("as_reported")));
    }
    c.engine_id = j.value("engine_id", c.engine_id);
    c.engines_registry = resolve(j.value("engines", std::string{}), base_dir);
    if (j.contains("detector_bands")) c.bands.detector = bands_from_json(j["detector_bands"]);
    if (j.contains("grounder_bands")) c.bands.grounder = bands_from_json(j["grounder_bands"]);
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    if (j.contains("label_set")) {
      const auto& ls = j["label_set"];
      if (ls.contains("non_lateralizable"))
        c.non_lateralizable = ls["non_lateralizable"].get<std::set<std::string>>();
      if (ls.contains("suppressed")) c.suppressed = ls["suppressed"].get<std::set<std::string>>();
    }
    c.synonyms = resolve(j.value("synonyms", std::string{}), base_dir);
    c.user_prompt = j.value("user_prompt", c.user_prompt);
    c.threads = j.value("threads", 0u);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("agent config: ") + e.what());
  }
  c.validate();
  return c;
}

AgentConfig load_agent_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "agent config '" + path.string() + "': " + e.what());
  }
  return agent_config_from_json(j, path.parent_path());
}

json to_json(const AgentConfig& c) {
  json j{{"probe_weights", c.probe_weights.string()},
         {"grounding",
          {{"fixture", c.grounding_fixture.string()},
           {"endpoint", c.grounding_endpoint},
           {"timeout_ms", c.grounding_timeout.count()},
           {"centroid_convention", c.centroid_convention == CentroidConvention::kAsReported
                                       ? "as_reported"
                                       : "radiological"}}},
         {"engine_id", c.engine_id},
         {"engines", c.engines_registry.string()},
         {"detector_bands", to_json(c.bands.detector)},
         {"grounder_bands", to_json(c.bands.grounder)},
         {"decision_threshold", c.decision_threshold},
         {"synonyms", c.synonyms.string()},
         {"user_prompt", c.user_prompt},
         {"threads", c.threads}};
  json ls = json::object();
  if (c.non_lateralizable) ls["non_lateralizable"] = *c.non_lateralizable;
  if (c.suppressed) ls["suppressed"] = *c.suppressed;
  j["label_set"] = ls;
  return j;
}

json to_json(const RunTrace& t) {
  json j{{"image_id", t.image_id}, {"user_prompt", t.user_prompt}};
  if (t.detections) {
    json d = json::object();
    const auto& ls = t.detections->label_set();
    for (std::size_t i = 0; i < ls.size(); ++i) d[ls.labels()[i]] = t.detections->scores()[i];
    j["detections"] = d;
  }
  j["probe_positive"] = findings_json(t.probe_positive);
  j["survivors"] = t.survivors;
  j["suppressed"] = t.suppressed;
  j["below_floor"] = t.below_floor;
  json g = json::array();
  for (const auto& o : t.outcomes) g.push_back(to_json(o));
  j["groundings"] = g;
  if (t.bundle) j["prompt"] = to_json(*t.bundle);
  if (t.report)
    j["report"] = {{"text", t.report->text},
                   {"engine_id", t.report->engine_id},
                   {"scan", t.report->scan},
                   {"prompt_fingerprint", t.report->prompt_fingerprint}};
  if (t.temporal) j["temporal"] = to_json(*t.temporal);
  return j;
}

std::vector<LocalisationCase> localisation_cases_from_json(const json& j) {
  const json& arr = j.is_object() && j.contains("cases") ? j["cases"] : j;
  if (!arr.is_array()) fail(ErrorCode::kFormat, "localisation cases: expected an array");
  std::vector<LocalisationCase> out;
  try {
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      LocalisationCase c;
      c.case_id = e.value("case_id", "case-" + std::to_string(i + 1));
      c.question = e.value("question", std::string{});
      c.option_1 = e.at("option_1").get<std::string>();
      c.option_2 = e.at("option_2").get<std::string>();
      c.image_ref = e.at("image_ref").get<std::string>();
      c.detected = e.value("detected", true);
      const auto& a = e.at("answer");
      if (a.is_number_integer()) {
        c.answer = a.get<int>();
      } else {
        const auto text = a.get<std::string>();
        if (text == c.option_1) c.answer = 1;
        else if (text == c.option_2) c.answer = 2;
        else fail(ErrorCode::kFormat, "case " + c.case_id + ": answer matches neither option");
      }
      if (c.answer != 1 && c.answer != 2)
        fail(ErrorCode::kFormat, "case " + c.case_id + ": answer must be 1 or 2");
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("localisation cases: ") + e.what());
  }
  return out;
}

std::vector<LocalisationCase> load_localisation_cases(const fs::path& path) {
  try {
    return localisation_cases_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "localisation cases '" + path.string() + "': " + e.what());
  }
}

LocalisationStrategy parse_localisation_strategy(std::string_view name) {
  if (name == "two-option" || name == "two_option") return LocalisationStrategy::kTwoOption;
  if (name == "position") return LocalisationStrategy::kPosition;
  fail(ErrorCode::kInvalidArgument, "unknown localisation strategy '" + std::string(name) + "'");
}

std::string_view localisation_strategy_name(LocalisationStrategy s) {
  return s == LocalisationStrategy::kTwoOption ? "two-option" : "position";
}

std::pair<std::string, Side> strip_side(std::string_view option) {
  std::istringstream in{std::string(option)};
  std::string word, rest;
  Side side = Side::kAbstain;
  while (in >> word) {
    const auto w = to_lower(word);
    if ((w == "left" || w == "right") && side == Side::kAbstain) {
      side = w == "left" ? Side::kLeft : Side::kRight;
      continue;
    }
    rest += (rest.empty() ? "" : " ") + word;
  }
  return {rest, side};
}

json to_json(const LocalisationReport& r) {
  json decisions = json::array();
  for (const auto& d : r.decisions)
    decisions.push_back({{"case_id", d.case_id},
                         {"chosen", d.chosen ? json(*d.chosen) : json(nullptr)},
                         {"correct", d.correct},
                         {"undetected", d.undetected}});
  return json{{"strategy", localisation_strategy_name(r.strategy)},
              {"total", r.total},
              {"decided", r.decided},
              {"correct", r.correct},
              {"abstained", r.abstained},
              {"undetected", r.undetected},
              {"decided_accuracy", r.decided_accuracy ? json(*r.decided_accuracy) : json(nullptr)},
              {"overall_accuracy", r.overall_accuracy},
              {"decisions", decisions}};
}

std::string localisation_table(const LocalisationReport& r) {
  TextTable t({"strategy", "decided acc", "overall acc", "decided", "abstained", "undetected",
               "total"});
  t.add_row({std::string(localisation_strategy_name(r.strategy)),
             format_optional(r.decided_accuracy), format_fixed(r.overall_accuracy),
             std::to_string(r.decided), std::to_string(r.abstained), std::to_string(r.undetected),
             std::to_string(r.total)});
  return t.render();
}

LocalisationReport run_localisation_benchmark(GroundingBackend& grounder,
                                              const std::vector<LocalisationCase>& cases,
                                              LocalisationStrategy strategy,
                                              CentroidConvention convention) {
  if (cases.empty()) fail(ErrorCode::kInvalidArgument, "no localisation cases");
  LocalisationReport r;
  r.strategy = strategy;
  r.total = cases.size();
  for (const auto& c : cases) {
    LocalisationDecision d{c.case_id, std::nullopt, false, false};
    if (!c.detected) {
      d.undetected = true;
      ++r.undetected;
      r.decisions.push_back(d);
      continue;
    }
    if (strategy == LocalisationStrategy::kTwoOption) {
      const auto choice = benchmark_two_option(grounder, c.option_1, c.option_2, c.image_ref);
      if (choice != OptionChoice::kAbstain) d.chosen = choice == OptionChoice::kA ? 1 : 2;
    } else {
      const auto [phrase, side_1] = strip_side(c.option_1);
      const auto side_2 = strip_side(c.option_2).second;
      if (side_1 == Side::kAbstain || side_2 == Side::kAbstain || side_1 == side_2)
        fail(ErrorCode::kInvalidArgument,
             "case " + c.case_id + ": the position strategy needs one left and one right option");
      const auto side = benchmark_position(grounder, phrase, c.image_ref, convention);
      if (side != Side::kAbstain) d.chosen = side == side_1 ? 1 : 2;
    }
    if (d.chosen) {
      ++r.decided;
      d.correct = *d.chosen == c.answer;
      if (d.correct) ++r.correct;
    } else {
      ++r.abstained;
    }
    r.decisions.push_back(d);
  }
  if (r.decided > 0) r.decided_accuracy = static_cast<double>(r.correct) / r.decided;
  r.overall_accuracy = static_cast<double>(r.correct) / r.total;
  return r;
}

Agent::Agent(AgentConfig config, std::shared_ptr<const ProbeWeights> probe,
             std::shared_ptr<GroundingBackend> grounder,
             std::shared_ptr<GenerationBackend> generator, EngineConfig engine,
             SynonymTable synonyms)
    : config_(std::move(config)),
      probe_(std::move(probe)),
      grounder_(std::move(grounder)),
      generator_(std::move(generator)),
      engine_(std::move(engine)),
      synonyms_(std::move(synonyms)) {
  if (probe_) {
    probe_->validate();
    const LabelSet& base = *probe_->label_set;
    const bool bare = base.non_lateralizable().empty() && base.suppressed().empty();
    auto non_lat = config_.non_lateralizable;
    auto supp = config_.suppressed;
    if (!non_lat && bare) non_lat = default_non_lateralizable(base);
    if (!supp && bare) supp = default_suppressed(base);
    labels_ = std::make_shared<const LabelSet>(base.with_overrides(non_lat, supp));
    for (const auto& [phrase, label] : synonyms_)
      if (!labels_->contains(label))
        fail(ErrorCode::kConsistency,
             "synonym '" + phrase + "' maps to '" + label + "', which the probe does not predict");
  }
}

Agent Agent::from_config(const AgentConfig& config) {
  config.validate();
  std::shared_ptr<const ProbeWeights> probe;
  if (!config.probe_weights.empty())
    probe = loading("probe weights '" + config.probe_weights.string() + "'", [&] {
      return std::make_shared<const ProbeWeights>(load_weights(config.probe_weights));
    });

  std::shared_ptr<GroundingBackend> grounder;
  if (!config.grounding_fixture.empty())
    grounder = loading("grounding fixture '" + config.grounding_fixture.string() + "'", [&] {
      return std::shared_ptr<GroundingBackend>(StubGroundingBackend::load(config.grounding_fixture));
    });
  else
    grounder = std::make_shared<HttpGroundingBackend>(config.grounding_endpoint,
                                                      config.grounding_timeout);

  EngineConfig engine = loading("engine '" + config.engine_id + "'", [&] {
    if (config.engines_registry.empty()) return engine_preset(config.engine_id);
    for (auto& e : load_engine_registry(config.engines_registry))
      if (e.engine_id == config.engine_id) return e;
    fail(ErrorCode::kNotFound, "not listed in " + config.engines_registry.string());
  });
  std::shared_ptr<GenerationBackend> generator =
      loading("engine '" + engine.engine_id + "'", [&] { return make_generation_backend(engine); });

  SynonymTable synonyms;
  if (!config.synonyms.empty())
    synonyms = loading("synonyms '" + config.synonyms.string() + "'",
                       [&] { return load_synonyms(config.synonyms); });

  return Agent(config, std::move(probe), std::move(grounder), std::move(generator),
               std::move(engine), std::move(synonyms));
}

RunTrace Agent::run_findings(std::string_view image_id, std::span<const float> embedding,
                             std::string_view user_prompt) const {
  RunTrace t;
  t.image_id = std::string(image_id);
  t.user_prompt = resolve_user_prompt(user_prompt);

  t.detections = staged("detection", [&] {
    if (!probe_) fail(ErrorCode::kInvalidArgument, "no probe weights configured");
    if (embedding.size() != probe_->dim)
      fail(ErrorCode::kInvalidArgument, "embedding has " + std::to_string(embedding.size()) +
                                            " values, the probe expects " +
                                            std::to_string(probe_->dim));
    const auto raw = predict(*probe_, embedding);
    return DetectionMap(labels_, std::vector<double>(raw.scores().begin(), raw.scores().end()));
  });
  const DetectionMap& det = *t.detections;
  t.probe_positive = binary_prediction_set(det, config_.decision_threshold);

  staged("filter", [&] {
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      const auto& label = labels_->labels()[i];
      if (labels_->is_no_finding(label)) continue;
      if (labels_->is_suppressed(label)) t.suppressed.push_back(label);
      else if (det.scores()[i] < config_.bands.detector.suppression_floor)
        t.below_floor.push_back(label);
    }
    t.survivors = surviving_labels(det, config_.bands.detector);
  });

  staged("grounding", [&] {
    if (!grounder_) fail(ErrorCode::kInvalidArgument, "no grounding backend configured");
    for (const auto& label : t.survivors)
      if (labels_->is_lateralizable(label))
        t.outcomes.push_back(lateralize(*grounder_, *labels_, label, image_id));
  });

  t.bundle = staged("prompt", [&] {
    return build_prompt(det, t.outcomes, t.user_prompt, engine_, config_.bands);
  });

  t.report = staged("generation", [&] {
    if (!generator_) fail(ErrorCode::kInvalidArgument, "no generation backend configured");
    return generate(*t.bundle, engine_, *generator_, image_id);
  });
  t.temporal = detect_temporal_language(t.report->text);
  return t;
}

ListingRun Agent::run_detection_listing(std::string_view image_id,
                                        std::span<const float> embedding) const {
  ListingRun run;
  run.trace = run_findings(image_id, embedding, user_prompt_named("list"));
  run.extraction = staged("extraction", [&] {
    return extract_pathologies(run.trace.report->text, *labels_, synonyms_);
  });
  return run;
}

LocalisationReport Agent::run_localisation_benchmark(const std::vector<LocalisationCase>& cases,
                                                     LocalisationStrategy strategy) const {
  return staged("grounding", [&] {
    if (!grounder_) fail(ErrorCode::kInvalidArgument, "no grounding backend configured");
    return cxr::run_localisation_benchmark(*grounder_, cases, strategy,
                                           config_.centroid_convention);
  });
}

json to_json(const BatchSummary& s) {
  json failures = json::array();
  for (const auto& f : s.failures)
    failures.push_back({{"image_id", f.image_id},
                        {"error", error_code_name(f.code)},
                        {"message", f.message}});
  return json{{"cases", s.cases},
              {"succeeded", s.succeeded},
              {"failures", failures},
              {"accuracy", s.accuracy ? to_json(*s.accuracy) : json(nullptr)},
              {"probe_accuracy", s.probe_accuracy ? to_json(*s.probe_accuracy) : json(nullptr)},
              {"temporal_flagged", s.temporal_flagged}};
}

std::string safe_file_stem(std::string_view image_id) {
  std::string out;
  for (char c : image_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

BatchSummary run_batch(const Agent& agent, const EmbeddingFrame& frame, const fs::path& out_dir,
                       std::string_view user_prompt) {
  if (!agent.label_set()) fail(ErrorCode::kInvalidArgument, "batch runs need probe weights");
  if (agent.label_set()->labels() != frame.label_set().labels())
    fail(ErrorCode::kConsistency, "the manifest labels differ from the probe labels");
  std::set<std::string> stems;
  for (std::size_t i = 0; i < frame.rows(); ++i)
    if (!stems.insert(safe_file_stem(frame.record(i).image_id)).second)
      fail(ErrorCode::kConsistency,
           "image id '" + frame.record(i).image_id + "' collides with another output file name");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());

  struct Slot {
    std::optional<Findings> extracted;
    Findings probe_positive;
    bool temporal = false;
    std::optional<BatchFailure> failure;
  };
  std::vector<Slot> slots(frame.rows());
  parallel_for(frame.rows(), agent.config().threads, [&](std::size_t i) {
    const auto& rec = frame.record(i);
    const fs::path stem = out_dir / safe_file_stem(rec.image_id);
    try {
      RunTrace t = agent.run_findings(rec.image_id, frame.embeddings().row(i), user_prompt);
      const auto extraction =
          extract_pathologies(t.report->text, *agent.label_set(), agent.synonyms());
      json j = to_json(t);
      j["extraction"] = to_json(extraction);
      write_file(stem.string() + ".report.txt", t.report->text + "\n");
      write_file(stem.string() + ".trace.json", j.dump(2) + "\n");
      slots[i].extracted = extraction.positive;
      slots[i].probe_positive = t.probe_positive;
      slots[i].temporal = t.temporal && t.temporal->flagged;
    } catch (const Error& e) {
      slots[i].failure = BatchFailure{rec.image_id, e.code(), e.what()};
      try {
        write_file(stem.string() + ".error.json",
                   json{{"image_id", rec.image_id},
                        {"error", error_code_name(e.code())},
                        {"message", e.what()}}
                           .dump(2) +
                       "\n");
      } catch (const Error&) {
      }
    }
  });

  BatchSummary s;
  s.cases = frame.rows();
  std::vector<Findings> extracted, probe, refs;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].failure) {
      s.failures.push_back(*slots[i].failure);
      continue;
    }
    ++s.succeeded;
    if (slots[i].temporal) ++s.temporal_flagged;
    extracted.push_back(*slots[i].extracted);
    probe.push_back(slots[i].probe_positive);
    refs.push_back(positive_findings(frame.record(i), frame.label_set()));
  }
  if (!refs.empty()) {
    s.accuracy = exact_match_accuracy(extracted, refs);
    s.probe_accuracy = exact_match_accuracy(probe, refs);
  }
  write_file(out_dir / "summary.json", to_json(s).dump(2) + "\n");
  return s;
}

SyntheticWorld synthesize_world(std::size_t cases, std::uint64_t seed, const LabelSet& labels) {
  require(cases > 0, "synthetic world needs at least one case");
  const std::size_t n = labels.size();
  auto ls = std::make_shared<const LabelSet>(labels);
  DeterministicRng rng(seed);

  ProbeWeights probe;
  probe.label_set = ls;
  probe.dim = n;
  probe.weights.assign(n * n, 0.0);
  for (std::size_t l = 0; l < n; ++l) probe.weights[l * n + l] = 1.0;
  probe.bias.assign(n, 0.0);

  DatasetManifest manifest;
  manifest.label_set = ls;
  manifest.source_name = "synthetic";
  std::vector<float> values;
  values.reserve(cases * n);
  json fixture = json::array();
  std::vector<std::map<std::string, Side>> sides(cases);

  for (std::size_t c = 0; c < cases; ++c) {
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04zu", c + 1);
    ScanRecord rec;
    rec.image_id = id;
    rec.labels.assign(n, 0);
    const bool normal = rng.uniform() < 0.2;
    bool any_positive = false;
    for (std::size_t l = 0; l < n; ++l) {
      const auto& label = labels.labels()[l];
      double score = rng.uniform() * 0.28 + 0.01;
      if (!labels.is_no_finding(label) && !normal && rng.uniform() < 0.35)
        score = 0.31 + rng.uniform() * 0.68;
      values.push_back(static_cast<float>(std::log(score / (1.0 - score))));
      if (!labels.is_no_finding(label) && score >= 0.5) {
        rec.labels[l] = 1;
        any_positive = true;
      }
      if (labels.is_no_finding(label) || !labels.is_lateralizable(label)) continue;
      const double u = rng.uniform();
      const Side side = u < 0.1 ? Side::kAbstain : (u < 0.55 ? Side::kLeft : Side::kRight);
      const double win = 0.2 + rng.uniform() * 0.8;
      const double lose = rng.uniform() * win * 0.9;
      const double left = side == Side::kAbstain ? -0.1 : (side == Side::kLeft ? win : lose);
      const double right = side == Side::kAbstain ? -0.2 : (side == Side::kRight ? win : lose);
      const std::string p = to_lower(label);
      fixture.push_back({{"image_id", id}, {"phrase", "left " + p}, {"max_activation", left},
                         {"centroid_x_fraction", left > 0 ? json(0.25) : json(nullptr)}});
      fixture.push_back({{"image_id", id}, {"phrase", "right " + p}, {"max_activation", right},
                         {"centroid_x_fraction", right > 0 ? json(0.75) : json(nullptr)}});
      sides[c][label] = side;
    }
    if (labels.no_finding_label() && !any_positive)
      rec.labels[labels.index_of(*labels.no_finding_label())] = 1;
    manifest.records.push_back(std::move(rec));
  }
  EmbeddingFrame frame(std::move(manifest), EmbeddingMatrix(cases, n, std::move(values)));
  probe.provenance.dataset_fingerprint = frame.fingerprint();
  return SyntheticWorld{std::move(probe), std::move(frame), std::move(fixture), std::move(sides)};
}

void write_synthetic_world(const SyntheticWorld& world, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  save_weights(dir / "probe.bin", world.probe);
  write_embeddings(dir / "embeddings.cxre", world.frame.embeddings());
  json manifest = manifest_to_json(world.frame.manifest());
  manifest["embeddings"] = "embeddings.cxre";
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_file(dir / "grounding.json", world.grounding_fixture.dump(2) + "\n");
  const json agent{{"probe_weights", "probe.bin"},
                   {"grounding", {{"fixture", "grounding.json"}}},
                   {"engine_id", "template-stub"},
                   {"user_prompt", "list"}};
  write_file(dir / "agent.json", agent.dump(2) + "\n");
}

}  // namespace cxr
