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

#include "core/generation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "core/error.hpp"
#include "core/http_client.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

constexpr std::string_view kContextHeader = "Image context from the chest X-ray analysis tools.";
constexpr std::string_view kDetectionHeader = "Pathology detection:";
constexpr std::string_view kLocalisationHeader = "Localisation:";
constexpr std::string_view kNormalContext =
    "No pathologies were detected on this chest X-ray by the pathology detection tool.";

constexpr std::string_view kRadiologistPersona =
    "You are a helpful assistant, specialising in radiology and interpreting Chest X-rays.";

const char* const kInstructionPointers[] = {
    "A pathology and its lateral location (e.g. pleural effusion and left pleural effusion) "
    "are part of the same finding. The location is an additional detail about where the "
    "pathology is likely found, not an indicator of a separate pathology.",
    "Synthesize the pathology detection and localisation data. Do not talk about them "
    "separately.",
    "Confidence scores from the pathology detection and phrase grounding tools are not "
    "directly comparable. Each indicates confidence within its own context of detection or "
    "localisation.",
    "A missing lateral location does not imply the absence of a pathology; it indicates the "
    "localisation could not be confidently determined.",
};

std::string percent(double x) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string band_instructions(const ThresholdBands& bands, std::string_view what) {
  std::ostringstream out;
  out << "Describe " << what << " confidence in words: below " << percent(bands.suppression_floor)
      << " do not mention it";
  for (std::size_t i = 0; i < bands.bands.size(); ++i) {
    out << "; " << percent(bands.bands[i].lower);
    if (i + 1 < bands.bands.size()) out << " to " << percent(bands.bands[i + 1].lower);
    else out << " and above";
    out << " \"" << bands.bands[i].phrase << "\"";
  }
  out << ".";
  return out.str();
}

std::string style_instructions(PromptStyle style) {
  switch (style) {
    case PromptStyle::kSimple:
      return "Write the findings section of the chest X-ray report.";
    case PromptStyle::kFlash:
      return "Write the findings section of the chest X-ray report using the information "
             "above, combining each pathology with its location.";
    case PromptStyle::kInstructionRich: {
      std::string out =
          "Write the findings section of the chest X-ray report. Follow these rules:\n";
      int n = 1;
      for (const char* p : kInstructionPointers) out += std::to_string(n++) + ". " + p + "\n";
      out.pop_back();
      return out;
    }
  }
  return {};
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::map<std::string, EngineConfig> build_presets() {
  std::map<std::string, EngineConfig> p;

  EngineConfig flash;
  flash.engine_id = "gemini-1.5-flash";
  flash.style = PromptStyle::kFlash;
  flash.system_prompt = std::string(kRadiologistPersona) +
                        " Please answer CONCISELY and professionally as a radiologist would.";
  flash.normal_system_prompt =
      flash.system_prompt + " When no pathology is detected, report a normal study briefly.";
  flash.backend = BackendKind::kHttp;
  p[flash.engine_id] = flash;

  EngineConfig llama;
  llama.engine_id = "llama3-8b";
  llama.style = PromptStyle::kInstructionRich;
  llama.system_prompt = std::string(kRadiologistPersona) +
                        " You MUST answer CONCISELY and professionally as a radiologist would.";
  llama.normal_system_prompt =
      llama.system_prompt + " When no pathology is detected, report a normal study briefly.";
  llama.backend = BackendKind::kHttp;
  p[llama.engine_id] = llama;

  EngineConfig mistral;
  mistral.engine_id = "chexagent-mistral-7b";
  mistral.style = PromptStyle::kSimple;
  mistral.system_prompt = "You are a radiologist writing chest X-ray reports.";
  mistral.normal_system_prompt = mistral.system_prompt;
  mistral.backend = BackendKind::kHttp;
  p[mistral.engine_id] = mistral;

  EngineConfig stub;
  stub.engine_id = "template-stub";
  stub.style = PromptStyle::kFlash;
  stub.system_prompt = flash.system_prompt;
  stub.normal_system_prompt = flash.normal_system_prompt;
  stub.backend = BackendKind::kTemplateStub;
  p[stub.engine_id] = stub;
  return p;
}

const std::map<std::string, EngineConfig>& presets() {
  static const auto kPresets = build_presets();
  return kPresets;
}

}  // namespace

std::string_view prompt_style_name(PromptStyle s) {
  switch (s) {
    case PromptStyle::kSimple: return "simple";
    case PromptStyle::kInstructionRich: return "instruction_rich";
    case PromptStyle::kFlash: return "flash";
  }
  return "simple";
}

PromptStyle parse_prompt_style(std::string_view s) {
  if (s == "simple") return PromptStyle::kSimple;
  if (s == "instruction_rich") return PromptStyle::kInstructionRich;
  if (s == "flash") return PromptStyle::kFlash;
  fail(ErrorCode::kInvalidArgument, "unknown prompt style '" + std::string(s) + "'");
}

std::string_view confidence_mode_name(ConfidenceMode m) {
  return m == ConfidenceMode::kPreMappedPhrases ? "pre_mapped_phrases" : "raw_with_instructions";
}

ConfidenceMode parse_confidence_mode(std::string_view s) {
  if (s == "pre_mapped_phrases") return ConfidenceMode::kPreMappedPhrases;
  if (s == "raw_with_instructions") return ConfidenceMode::kRawWithInstructions;
  fail(ErrorCode::kInvalidArgument, "unknown confidence mode '" + std::string(s) + "'");
}

void EngineConfig::validate() const {
  require(!engine_id.empty(), "engine_id is empty");
  require(temperature >= 0.0 && std::isfinite(temperature), "temperature must be >= 0");
  require(max_tokens > 0, "max_tokens must be positive");
  require(max_retries >= 0, "max_retries must be >= 0");
  if (backend == BackendKind::kHttp)
    require(!endpoint.empty(), "engine '" + engine_id + "' has no endpoint");
  if (backend == BackendKind::kReplay)
    require(!replay_fixture.empty(), "engine '" + engine_id + "' has no replay fixture");
}

EngineConfig engine_preset(std::string_view engine_id) {
  auto it = presets().find(std::string(engine_id));
  if (it == presets().end())
    fail(ErrorCode::kNotFound, "unknown engine '" + std::string(engine_id) + "'");
  return it->second;
}

std::vector<std::string> engine_preset_ids() {
  std::vector<std::string> out;
  for (const auto& [id, _] : presets()) out.push_back(id);
  return out;
}

EngineConfig engine_from_json(const json& j, const std::filesystem::path& base_dir) {
  EngineConfig e;
  try {
    const std::string id = j.at("engine_id").get<std::string>();
    const std::string preset = j.value("preset", presets().count(id) ? id : std::string{});
    if (!preset.empty()) e = engine_preset(preset);
    e.engine_id = id;
    if (j.contains("style")) e.style = parse_prompt_style(j["style"].get<std::string>());
    e.system_prompt = j.value("system_prompt", e.system_prompt);
    e.normal_system_prompt = j.value("normal_system_prompt",
                                     e.normal_system_prompt.empty() ? e.system_prompt
                                                                    : e.normal_system_prompt);
    e.temperature = j.value("temperature", e.temperature);
    e.max_tokens = j.value("max_tokens", e.max_tokens);
    if (j.contains("confidence_mode"))
      e.confidence_mode = parse_confidence_mode(j["confidence_mode"].get<std::string>());
    if (j.contains("backend")) {
      const auto b = j["backend"].get<std::string>();
      if (b == "template_stub") e.backend = BackendKind::kTemplateStub;
      else if (b == "http") e.backend = BackendKind::kHttp;
      else if (b == "replay") e.backend = BackendKind::kReplay;
      else fail(ErrorCode::kInvalidArgument, "unknown engine backend '" + b + "'");
    }
    e.endpoint = j.value("endpoint", e.endpoint);
    e.api_key_env = j.value("api_key_env", e.api_key_env);
    if (j.contains("replay_fixture")) {
      std::filesystem::path p = j["replay_fixture"].get<std::string>();
      e.replay_fixture = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    }
    if (j.contains("timeout_ms")) e.timeout = std::chrono::milliseconds(j["timeout_ms"].get<int>());
    e.max_retries = j.value("max_retries", e.max_retries);
    if (j.contains("retry_backoff_ms"))
      e.retry_backoff = std::chrono::milliseconds(j["retry_backoff_ms"].get<int>());
    e.max_prompt_chars = j.value("max_prompt_chars", e.max_prompt_chars);
  } catch (const json::exception& ex) {
    fail(ErrorCode::kFormat, std::string("engine config: ") + ex.what());
  }
  e.validate();
  return e;
}

json to_json(const EngineConfig& e) {
  const char* backend = e.backend == BackendKind::kHttp     ? "http"
                        : e.backend == BackendKind::kReplay ? "replay"
                                                            : "template_stub";
  return json{{"engine_id", e.engine_id},
              {"style", prompt_style_name(e.style)},
              {"system_prompt", e.system_prompt},
              {"normal_system_prompt", e.normal_system_prompt},
              {"temperature", e.temperature},
              {"max_tokens", e.max_tokens},
              {"confidence_mode", confidence_mode_name(e.confidence_mode)},
              {"backend", backend},
              {"endpoint", e.endpoint},
              {"api_key_env", e.api_key_env},
              {"replay_fixture", e.replay_fixture},
              {"timeout_ms", e.timeout.count()},
              {"max_retries", e.max_retries},
              {"retry_backoff_ms", e.retry_backoff.count()},
              {"max_prompt_chars", e.max_prompt_chars}};
}

std::vector<EngineConfig> load_engine_registry(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "engine registry '" + path.string() + "': " + e.what());
  }
  std::vector<EngineConfig> out;
  std::set<std::string> ids;
  for (const auto& e : j.at("engines")) {
    out.push_back(engine_from_json(e, path.parent_path()));
    require(ids.insert(out.back().engine_id).second,
            "engine registry repeats '" + out.back().engine_id + "'");
  }
  return out;
}

std::string PromptBundle::full_prompt() const {
  return image_context + "\n" + user;
}

std::string PromptBundle::fingerprint() const {
  return request_fingerprint(GenerationRequest{system, full_prompt(), 0.0, 0});
}

json to_json(const PromptBundle& b) {
  return json{{"system", b.system},
              {"image_context", b.image_context},
              {"user", b.user},
              {"normal_variant", b.normal_variant},
              {"fingerprint", b.fingerprint()}};
}

std::vector<std::string> surviving_labels(const DetectionMap& detections,
                                          const ThresholdBands& detector_bands) {
  const auto& ls = detections.label_set();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto& label = ls.labels()[i];
    if (ls.is_no_finding(label) || ls.is_suppressed(label)) continue;
    if (detections.scores()[i] < detector_bands.suppression_floor) continue;
    idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return detections.scores()[a] > detections.scores()[b];
  });
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(ls.labels()[i]);
  return out;
}

PromptBundle build_prompt(const DetectionMap& detections,
                          const std::vector<GroundingOutcome>& groundings,
                          std::string_view user_prompt, const EngineConfig& engine,
                          const PromptBands& bands) {
  if (trim(user_prompt).empty())
    fail(ErrorCode::kInvalidArgument, "the user prompt is empty");
  bands.detector.validate();
  bands.grounder.validate();

  const auto& ls = detections.label_set();
  const auto survivors = surviving_labels(detections, bands.detector);
  std::map<std::string, const GroundingOutcome*> by_label;
  for (const auto& g : groundings) {
    if (std::find(survivors.begin(), survivors.end(), g.pathology) == survivors.end())
      fail(ErrorCode::kConsistency,
           "grounding for '" + g.pathology + "' has no surviving detection");
    if (!ls.is_lateralizable(g.pathology))
      fail(ErrorCode::kConsistency, "grounding for non-lateralizable '" + g.pathology + "'");
    if (!by_label.emplace(g.pathology, &g).second)
      fail(ErrorCode::kConsistency, "duplicate grounding for '" + g.pathology + "'");
  }

  PromptBundle b;
  b.user = std::string(user_prompt);
  std::ostringstream ctx;
  ctx << kContextHeader << "\n";

  if (survivors.empty()) {
    b.normal_variant = true;
    b.system = engine.normal_system_prompt.empty() ? engine.system_prompt
                                                   : engine.normal_system_prompt;
    ctx << kNormalContext << "\n"
        << "Write a concise findings section for a normal chest X-ray.\n";
    b.image_context = ctx.str();
    return b;
  }

  b.system = engine.system_prompt;
  const bool raw = engine.confidence_mode == ConfidenceMode::kRawWithInstructions;

  ctx << kDetectionHeader << "\n";
  for (const auto& label : survivors) {
    const auto score = detections.score(label);
    const std::string name = to_lower(label);
    if (raw) ctx << "- " << name << ": detection confidence " << percent(score.value()) << "\n";
    else ctx << "- " << *phrase_for(score, name, bands.detector) << "\n";
  }

  std::vector<std::string> undetermined;
  std::ostringstream loc;
  for (const auto& label : survivors) {
    if (!ls.is_lateralizable(label)) continue;
    auto it = by_label.find(label);
    const GroundingOutcome* g = it == by_label.end() ? nullptr : it->second;
    const std::string name = to_lower(label);
    if (!g || g->location == Side::kAbstain) {
      undetermined.push_back(name);
      continue;
    }
    const std::string side(side_name(g->location));
    if (raw) {
      loc << "- " << name << ": " << side << " side, localisation confidence "
          << percent(g->confidence.value()) << "\n";
    } else if (auto phrase = phrase_for(g->confidence, side + " " + name, bands.grounder)) {
      loc << "- " << *phrase << "\n";
    } else {
      undetermined.push_back(name);
    }
  }
  const std::string loc_lines = loc.str();
  if (!loc_lines.empty()) ctx << "\n" << kLocalisationHeader << "\n" << loc_lines;
  if (!undetermined.empty()) {
    ctx << "\nLateral location could not be determined for: ";
    for (std::size_t i = 0; i < undetermined.size(); ++i)
      ctx << (i ? ", " : "") << undetermined[i];
    ctx << ".\n";
  }
  if (raw) {
    ctx << "\n" << band_instructions(bands.detector, "detection") << "\n"
        << band_instructions(bands.grounder, "localisation") << "\n";
  }
  ctx << "\n" << style_instructions(engine.style) << "\n";
  b.image_context = ctx.str();
  return b;
}

std::string request_fingerprint(const GenerationRequest& r) {
  std::uint64_t h = fnv1a(r.system);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(r.prompt, h);
  return hex64(h);
}

GenerationReply TemplateStubEngine::complete(const GenerationRequest& request) {
  std::istringstream in(request.prompt);
  std::string line;
  bool in_section = false;
  std::vector<std::string> sentences;
  while (std::getline(in, line)) {
    if (line == kDetectionHeader || line == kLocalisationHeader) {
      in_section = true;
      continue;
    }
    if (trim(line).empty()) {
      in_section = false;
      continue;
    }
    if (in_section && line.rfind("- ", 0) == 0) sentences.push_back(capitalize(line.substr(2)) + ".");
  }
  if (sentences.empty()) return GenerationReply{std::string(kNormalReport), "stop"};
  std::string text;
  for (const auto& s : sentences) text += (text.empty() ? "" : " ") + s;
  return GenerationReply{text, "stop"};
}

GenerationReply HttpGenerationBackend::complete(const GenerationRequest& request) {
  std::map<std::string, std::string> headers;
  if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;
  const auto res = post_json(base_url_, "/v1/generate",
                             json{{"system", request.system},
                                  {"prompt", request.prompt},
                                  {"temperature", request.temperature},
                                  {"max_tokens", request.max_tokens}},
                             timeout_, headers);
  const std::string where = "generation backend " + base_url_;
  if (res.status == 413) fail(ErrorCode::kOverLength, where + ": prompt too long");
  if (res.status == 408 || res.status == 504) fail(ErrorCode::kTimeout, where + ": timed out");
  if (res.status == 429 || res.status >= 500)
    fail(ErrorCode::kBackend, where + ": HTTP " + std::to_string(res.status));
  if (res.status != 200)
    fail(ErrorCode::kRefusal, where + ": request declined with HTTP " + std::to_string(res.status));
  json j;
  try {
    j = json::parse(res.body);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kBackend, where + ": " + e.what());
  }
  if (j.contains("refusal") && !j["refusal"].is_null())
    fail(ErrorCode::kRefusal, where + ": " + j["refusal"].dump());
  if (!j.contains("text") || !j["text"].is_string())
    fail(ErrorCode::kBackend, where + ": response has no text");
  return GenerationReply{j["text"].get<std::string>(), j.value("finish_reason", std::string{})};
}

std::unique_ptr<ReplayGenerationBackend> ReplayGenerationBackend::load(
    const std::filesystem::path& path) {
  std::map<std::string, GenerationReply> replies;
  try {
    for (const auto& e : json::parse(read_file(path)))
      replies[e.at("fingerprint").get<std::string>()] =
          GenerationReply{e.at("text").get<std::string>(), e.value("finish_reason", std::string{})};
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "replay fixture '" + path.string() + "': " + e.what());
  }
  return std::make_unique<ReplayGenerationBackend>(std::move(replies));
}

GenerationReply ReplayGenerationBackend::complete(const GenerationRequest& request) {
  const auto fp = request_fingerprint(request);
  auto it = replies_.find(fp);
  if (it == replies_.end())
    fail(ErrorCode::kNotFound, "replay fixture has no reply for prompt " + fp);
  return it->second;
}

GenerationReply RecordingGenerationBackend::complete(const GenerationRequest& request) {
  auto reply = inner_.complete(request);
  std::lock_guard lock(mu_);
  captured_[request_fingerprint(request)] = reply;
  return reply;
}

json RecordingGenerationBackend::fixture() const {
  std::lock_guard lock(mu_);
  json arr = json::array();
  for (const auto& [fp, r] : captured_)
    arr.push_back({{"fingerprint", fp}, {"text", r.text}, {"finish_reason", r.finish_reason}});
  return arr;
}

void RecordingGenerationBackend::save(const std::filesystem::path& path) const {
  write_file(path, fixture().dump(2) + "\n");
}

std::unique_ptr<GenerationBackend> make_generation_backend(const EngineConfig& engine) {
  engine.validate();
  switch (engine.backend) {
    case BackendKind::kTemplateStub:
      return std::make_unique<TemplateStubEngine>();
    case BackendKind::kReplay:
      return ReplayGenerationBackend::load(engine.replay_fixture);
    case BackendKind::kHttp: {
      std::string key;
      if (!engine.api_key_env.empty()) {
        const char* v = std::getenv(engine.api_key_env.c_str());
        if (!v)
          fail(ErrorCode::kInvalidArgument,
               "environment variable " + engine.api_key_env + " is not set");
        key = v;
      }
      return std::make_unique<HttpGenerationBackend>(engine.endpoint, engine.timeout, key);
    }
  }
  fail(ErrorCode::kInternal, "unhandled backend kind");
}

FindingsReport generate(const PromptBundle& bundle, const EngineConfig& engine,
                        GenerationBackend& backend, std::string_view scan_id) {
  if (trim(bundle.user).empty()) fail(ErrorCode::kInvalidArgument, "the user prompt is empty");
  const GenerationRequest request{bundle.system, bundle.full_prompt(), engine.temperature,
                                  engine.max_tokens};
  if (request.system.size() + request.prompt.size() > engine.max_prompt_chars)
    fail(ErrorCode::kOverLength,
         "prompt has " + std::to_string(request.system.size() + request.prompt.size()) +
             " characters, engine '" + engine.engine_id + "' accepts " +
             std::to_string(engine.max_prompt_chars));

  GenerationReply reply;
  for (int attempt = 0;; ++attempt) {
    try {
      reply = backend.complete(request);
      break;
    } catch (const Error& e) {
      const bool transient = e.code() == ErrorCode::kBackend || e.code() == ErrorCode::kTimeout;
      if (!transient || attempt >= engine.max_retries) throw;
      std::this_thread::sleep_for(engine.retry_backoff * (1 << std::min(attempt, 10)));
    }
  }
  if (reply.finish_reason == "length")
    fail(ErrorCode::kTruncated,
         "engine '" + engine.engine_id + "' stopped at max_tokens; output would be truncated");
  if (trim(reply.text).empty())
    fail(ErrorCode::kBackend, "engine '" + engine.engine_id + "' returned empty text");
  return FindingsReport{reply.text, engine.engine_id, std::string(scan_id),
                        request_fingerprint(request)};
}

const std::map<std::string, std::string>& default_user_prompts() {
  static const std::map<std::string, std::string> kPrompts{
      {"findings", "What are the findings?"},
      {"list",
       "Just list the findings on the chest x-ray, nothing else. If there are no findings, "
       "just say that."}};
  return kPrompts;
}

const std::string& user_prompt_named(std::string_view name) {
  auto it = default_user_prompts().find(std::string(name));
  if (it == default_user_prompts().end())
    fail(ErrorCode::kNotFound, "unknown prompt name '" + std::string(name) + "'");
  return it->second;
}

std::string resolve_user_prompt(std::string_view name_or_text) {
  auto it = default_user_prompts().find(std::string(name_or_text));
  return it == default_user_prompts().end() ? std::string(name_or_text) : it->second;
}

}  // namespace cxr
