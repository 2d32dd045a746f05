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

// Prompt construction from detector and grounder output, and the LLM
// backends behind one wire contract:
//
//   POST /v1/generate {"system", "prompt", "temperature", "max_tokens"}
//     -> {"text", "finish_reason"?}
//
// Provider adapters live outside the core; the core only speaks this
// contract.

#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "core/grounding.hpp"
#include "core/types.hpp"
#include "core/uncertainty.hpp"
#include "json.hpp"

namespace cxr {

enum class PromptStyle { kSimple, kInstructionRich, kFlash };
enum class ConfidenceMode { kPreMappedPhrases, kRawWithInstructions };
enum class BackendKind { kTemplateStub, kHttp, kReplay };

std::string_view prompt_style_name(PromptStyle s);
PromptStyle parse_prompt_style(std::string_view s);
std::string_view confidence_mode_name(ConfidenceMode m);
ConfidenceMode parse_confidence_mode(std::string_view s);

struct EngineConfig {
  std::string engine_id;
  PromptStyle style = PromptStyle::kSimple;
  std::string system_prompt;
  // System prompt used when no pathology survives filtering.
  std::string normal_system_prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  ConfidenceMode confidence_mode = ConfidenceMode::kPreMappedPhrases;

  BackendKind backend = BackendKind::kTemplateStub;
  std::string endpoint;       // kHttp
  std::string api_key_env;    // name of the environment variable, never the key
  std::string replay_fixture; // kReplay
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{200};
  std::size_t max_prompt_chars = 32000;

  void validate() const;
};

// Built-in engines: "gemini-1.5-flash", "llama3-8b", "chexagent-mistral-7b",
// "template-stub". Unknown ids throw kNotFound.
EngineConfig engine_preset(std::string_view engine_id);
std::vector<std::string> engine_preset_ids();

// Fields missing from `j` fall back to the preset named by "preset" (or by
// "engine_id" when it names a preset). Relative paths resolve against
// `base_dir`.
EngineConfig engine_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const EngineConfig& e);

// {"engines": [...]}.
std::vector<EngineConfig> load_engine_registry(const std::filesystem::path& path);

struct PromptBundle {
  std::string system;
  std::string image_context;
  std::string user;
  bool normal_variant = false;

  // What is sent as "prompt": image context followed by the user prompt.
  std::string full_prompt() const;
  // FNV-1a over system and full prompt.
  std::string fingerprint() const;

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

nlohmann::json to_json(const PromptBundle& b);

struct PromptBands {
  ThresholdBands detector = default_bands();
  ThresholdBands grounder = default_bands();
};

// Labels that reach the prompt: not suppressed, not the no-finding label and
// at or above the detector floor; most confident first, ties in label order.
std::vector<std::string> surviving_labels(const DetectionMap& detections,
                                          const ThresholdBands& detector_bands);

// Pure function of its inputs. Throws kConsistency when a grounding outcome
// names a label that did not survive or is not lateralizable, and
// kInvalidArgument for an empty user prompt.
PromptBundle build_prompt(const DetectionMap& detections,
                          const std::vector<GroundingOutcome>& groundings,
                          std::string_view user_prompt, const EngineConfig& engine,
                          const PromptBands& bands = {});

struct GenerationRequest {
  std::string system;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
};

struct GenerationReply {
  std::string text;
  std::string finish_reason;  // "length" marks truncation
};

std::string request_fingerprint(const GenerationRequest& r);

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationReply complete(const GenerationRequest& request) = 0;
};

// Deterministic offline engine: turns every bullet of the detection and
// localisation sections into a sentence, or writes a normal study when the
// prompt carries no findings.
class TemplateStubEngine : public GenerationBackend {
 public:
  GenerationReply complete(const GenerationRequest& request) override;
  static constexpr std::string_view kNormalReport = "No acute cardiopulmonary abnormality.";
};

class HttpGenerationBackend : public GenerationBackend {
 public:
  HttpGenerationBackend(std::string base_url, std::chrono::milliseconds timeout,
                        std::string api_key = {})
      : base_url_(std::move(base_url)), timeout_(timeout), api_key_(std::move(api_key)) {}
  GenerationReply complete(const GenerationRequest& request) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
  std::string api_key_;
};

// Replays captured replies keyed by request fingerprint. Fixture: JSON array
// of {"fingerprint", "text", "finish_reason"?}.
class ReplayGenerationBackend : public GenerationBackend {
 public:
  explicit ReplayGenerationBackend(std::map<std::string, GenerationReply> replies)
      : replies_(std::move(replies)) {}
  static std::unique_ptr<ReplayGenerationBackend> load(const std::filesystem::path& path);
  GenerationReply complete(const GenerationRequest& request) override;

 private:
  std::map<std::string, GenerationReply> replies_;
};

// Forwards to another backend and captures every exchange.
class RecordingGenerationBackend : public GenerationBackend {
 public:
  explicit RecordingGenerationBackend(GenerationBackend& inner) : inner_(inner) {}
  GenerationReply complete(const GenerationRequest& request) override;
  nlohmann::json fixture() const;
  void save(const std::filesystem::path& path) const;

 private:
  GenerationBackend& inner_;
  mutable std::mutex mu_;
  std::map<std::string, GenerationReply> captured_;
};

std::unique_ptr<GenerationBackend> make_generation_backend(const EngineConfig& engine);

// Retries kBackend/kTimeout failures up to engine.max_retries times with
// doubling backoff. Throws kInvalidArgument for an empty user prompt,
// kOverLength before sending an over-long prompt, kTruncated when the backend
// reports a length cut-off, kRefusal when the backend declines.
FindingsReport generate(const PromptBundle& bundle, const EngineConfig& engine,
                        GenerationBackend& backend, std::string_view scan_id = {});

// "findings" and "list".
const std::map<std::string, std::string>& default_user_prompts();
// Throws kNotFound for unknown names.
const std::string& user_prompt_named(std::string_view name);
// A known prompt name resolves to its text; anything else is used verbatim.
std::string resolve_user_prompt(std::string_view name_or_text);

}  // namespace cxr
