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

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "core/error.hpp"
#include "core/generation.hpp"
#include "core/pipeline.hpp"
#include "httplib.h"
#include "support/oracles.hpp"

namespace cxr {
namespace {

using nlohmann::json;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

std::shared_ptr<const LabelSet> chexpert() {
  static const auto ls = std::make_shared<const LabelSet>(chexpert_label_set());
  return ls;
}

DetectionMap detections(const std::map<std::string, double>& scores) {
  std::vector<double> v(chexpert()->size(), 0.0);
  for (const auto& [l, s] : scores) v[chexpert()->index_of(l)] = s;
  return DetectionMap(chexpert(), v);
}

GroundingOutcome outcome(std::string label, Side side, double conf) {
  GroundingOutcome o;
  o.pathology = std::move(label);
  o.location = side;
  o.confidence = ConfidenceScore(conf);
  return o;
}

DetectionMap example_detections() {
  return detections({{"Pleural Effusion", 0.92},
                     {"Cardiomegaly", 0.55},
                     {"Edema", 0.35},
                     {"Pneumothorax", 0.1},
                     {"Support Devices", 0.99},
                     {"No Finding", 0.8}});
}

std::vector<GroundingOutcome> example_groundings() {
  return {outcome("Pleural Effusion", Side::kLeft, 0.75), outcome("Edema", Side::kAbstain, 0.0)};
}

TEST(SurvivorsTest, OrderedByConfidenceWithoutSuppressedOrNoFinding) {
  EXPECT_EQ(surviving_labels(example_detections(), default_bands()),
            (std::vector<std::string>{"Pleural Effusion", "Cardiomegaly", "Edema"}));
  const auto tie = detections({{"Edema", 0.6}, {"Atelectasis", 0.6}});
  EXPECT_EQ(surviving_labels(tie, default_bands()), (std::vector<std::string>{"Edema", "Atelectasis"}));
}

TEST(PromptTest, GoldenFlashPrompt) {
  const auto b = build_prompt(example_detections(), example_groundings(), "What are the findings?",
                              engine_preset("template-stub"));
  EXPECT_FALSE(b.normal_variant);
  EXPECT_EQ(b.image_context,
            "Image context from the chest X-ray analysis tools.\n"
            "Pathology detection:\n"
            "- there is pleural effusion\n"
            "- possible cardiomegaly\n"
            "- cannot exclude edema\n"
            "\n"
            "Localisation:\n"
            "- probable left pleural effusion\n"
            "\n"
            "Lateral location could not be determined for: edema.\n"
            "\n"
            "Write the findings section of the chest X-ray report using the information above, "
            "combining each pathology with its location.\n");
  EXPECT_EQ(b.full_prompt(), b.image_context + "\nWhat are the findings?");
  EXPECT_EQ(b.system, engine_preset("gemini-1.5-flash").system_prompt);
  EXPECT_EQ(b.fingerprint().size(), 16u);
}

TEST(PromptTest, PreMappedModeCarriesNoNumbers) {
  for (const auto& id : engine_preset_ids()) {
    const auto b = build_prompt(example_detections(), example_groundings(), "findings?", engine_preset(id));
    EXPECT_EQ(b.image_context.find_first_of("0123456789"),
              id == "llama3-8b" ? b.image_context.find("1. ") : std::string::npos)
        << id;
    EXPECT_EQ(b.image_context.find("support devices"), std::string::npos);
    EXPECT_EQ(b.image_context.find("no finding"), std::string::npos);
    EXPECT_EQ(b.image_context.find("pneumothorax"), std::string::npos);
  }
}

TEST(PromptTest, InstructionRichCarriesNumberedRules) {
  const auto b = build_prompt(example_detections(), example_groundings(), "q", engine_preset("llama3-8b"));
  for (const char* n : {"\n1. ", "\n2. ", "\n3. ", "\n4. "})
    EXPECT_NE(b.image_context.find(n), std::string::npos);
  EXPECT_NE(b.system.find("MUST"), std::string::npos);
}

TEST(PromptTest, RawModeAddsBandInstructions) {
  auto e = engine_preset("chexagent-mistral-7b");
  e.confidence_mode = ConfidenceMode::kRawWithInstructions;
  const auto b = build_prompt(example_detections(), example_groundings(), "q", e);
  EXPECT_NE(b.image_context.find("- pleural effusion: detection confidence 0.92"), std::string::npos);
  EXPECT_NE(b.image_context.find("- pleural effusion: left side, localisation confidence 0.75"),
            std::string::npos);
  EXPECT_NE(b.image_context.find("below 0.30 do not mention it"), std::string::npos);
  EXPECT_NE(b.image_context.find("0.90 and above \"there is <pathology>\""), std::string::npos);
}

TEST(PromptTest, GroundingBelowFloorIsUndetermined) {
  const auto b = build_prompt(example_detections(), {outcome("Pleural Effusion", Side::kRight, 0.1)}, "q",
                              engine_preset("template-stub"));
  EXPECT_EQ(b.image_context.find("Localisation:"), std::string::npos);
  EXPECT_NE(b.image_context.find("determined for: pleural effusion, edema."), std::string::npos);
}

TEST(PromptTest, NormalVariant) {
  const auto b = build_prompt(detections({{"No Finding", 0.9}, {"Support Devices", 0.9}, {"Edema", 0.29}}),
                              {}, "What are the findings?", engine_preset("gemini-1.5-flash"));
  EXPECT_TRUE(b.normal_variant);
  EXPECT_EQ(b.system, engine_preset("gemini-1.5-flash").normal_system_prompt);
  EXPECT_NE(b.image_context.find("No pathologies were detected"), std::string::npos);
  EXPECT_EQ(b.image_context.find("Pathology detection:"), std::string::npos);
}

TEST(PromptTest, InconsistentInputsRejected) {
  const auto d = example_detections();
  const auto e = engine_preset("template-stub");
  EXPECT_EQ(code_of([&] { build_prompt(d, {outcome("Pneumothorax", Side::kLeft, 0.8)}, "q", e); }),
            ErrorCode::kConsistency);
  EXPECT_EQ(code_of([&] { build_prompt(d, {outcome("Cardiomegaly", Side::kLeft, 0.8)}, "q", e); }),
            ErrorCode::kConsistency);
  EXPECT_EQ(code_of([&] {
              build_prompt(d, {outcome("Edema", Side::kLeft, 0.8), outcome("Edema", Side::kRight, 0.8)}, "q",
                           e);
            }),
            ErrorCode::kConsistency);
  EXPECT_EQ(code_of([&] { build_prompt(d, {}, "  ", e); }), ErrorCode::kInvalidArgument);
}

TEST(PromptTest, PureFunctionOfInputs) {
  const auto e = engine_preset("llama3-8b");
  EXPECT_EQ(build_prompt(example_detections(), example_groundings(), "q", e),
            build_prompt(example_detections(), example_groundings(), "q", e));
}

TEST(StubEngineTest, EchoesFindingsOrWritesNormalStudy) {
  const auto e = engine_preset("template-stub");
  TemplateStubEngine stub;
  const auto r = generate(build_prompt(example_detections(), example_groundings(), "q", e), e, stub, "scan-1");
  EXPECT_EQ(r.text, "There is pleural effusion. Possible cardiomegaly. Cannot exclude edema. "
                    "Probable left pleural effusion.");
  EXPECT_EQ(r.engine_id, "template-stub");
  EXPECT_EQ(r.scan, "scan-1");
  const auto n = generate(build_prompt(detections({}), {}, "q", e), e, stub);
  EXPECT_EQ(n.text, TemplateStubEngine::kNormalReport);
}

TEST(EngineConfigTest, PresetsAndJson) {
  EXPECT_EQ(engine_preset_ids().size(), 4u);
  EXPECT_EQ(code_of([] { engine_preset("gpt"); }), ErrorCode::kNotFound);
  for (const auto& id : engine_preset_ids()) {
    auto e = engine_preset(id);
    EXPECT_EQ(e.temperature, 0.0);
    if (e.backend == BackendKind::kHttp) e.endpoint = "http://127.0.0.1:1";
    const auto back = engine_from_json(to_json(e));
    EXPECT_EQ(to_json(back), to_json(e));
  }
  const auto custom = engine_from_json(json{{"engine_id", "my-flash"}, {"preset", "gemini-1.5-flash"},
                                            {"endpoint", "http://x:1"}, {"max_tokens", 64}});
  EXPECT_EQ(custom.style, PromptStyle::kFlash);
  EXPECT_EQ(custom.max_tokens, 64);
  EXPECT_EQ(code_of([] { engine_from_json(json{{"engine_id", "llama3-8b"}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { engine_from_json(json{{"style", "simple"}}); }), ErrorCode::kFormat);
  const auto registry = load_engine_registry(std::filesystem::path(CXR_REPO_DATA) / "engines.json");
  EXPECT_EQ(registry.size(), 4u);
}

TEST(UserPromptTest, NamedPrompts) {
  EXPECT_EQ(resolve_user_prompt("findings"), "What are the findings?");
  EXPECT_NE(resolve_user_prompt("list").find("list the findings"), std::string::npos);
  EXPECT_EQ(resolve_user_prompt("Describe the heart."), "Describe the heart.");
  EXPECT_EQ(code_of([] { user_prompt_named("nope"); }), ErrorCode::kNotFound);
}

TEST(ReplayTest, RecordThenReplay) {
  oracle::TempDir dir("replay");
  const auto e = engine_preset("template-stub");
  TemplateStubEngine stub;
  RecordingGenerationBackend rec(stub);
  const auto bundle = build_prompt(example_detections(), example_groundings(), "q", e);
  const auto live = generate(bundle, e, rec);
  rec.save(dir.path / "replay.json");

  auto replay_engine = e;
  replay_engine.backend = BackendKind::kReplay;
  replay_engine.replay_fixture = (dir.path / "replay.json").string();
  auto replay = make_generation_backend(replay_engine);
  const auto again = generate(bundle, replay_engine, *replay);
  EXPECT_EQ(again.text, live.text);
  EXPECT_EQ(again.prompt_fingerprint, live.prompt_fingerprint);
  const auto other = build_prompt(detections({}), {}, "q", e);
  EXPECT_EQ(code_of([&] { generate(other, replay_engine, *replay); }), ErrorCode::kNotFound);
}

class FakeLlm {
 public:
  FakeLlm() {
    server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++calls;
      last_body = json::parse(req.body);
      last_auth = req.get_header_value("Authorization");
      const std::string mode = last_body.at("prompt").get<std::string>();
      if (mode.find("flaky") != std::string::npos && n < 3) {
        res.status = 503;
        return;
      }
      if (mode.find("down") != std::string::npos) {
        res.status = 500;
        return;
      }
      if (mode.find("toolong") != std::string::npos) {
        res.status = 413;
        return;
      }
      if (mode.find("forbidden") != std::string::npos) {
        res.status = 400;
        return;
      }
      json out{{"text", "Generated findings."}, {"finish_reason", "stop"}};
      if (mode.find("cutoff") != std::string::npos) out["finish_reason"] = "length";
      if (mode.find("decline") != std::string::npos) out["refusal"] = "cannot help";
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeLlm() {
    server_.stop();
    thread_.join();
  }
  EngineConfig engine() const {
    auto e = engine_preset("chexagent-mistral-7b");
    e.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    e.timeout = std::chrono::milliseconds(2000);
    e.retry_backoff = std::chrono::milliseconds(1);
    return e;
  }
  std::atomic<int> calls{0};
  json last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

PromptBundle bundle_with(const std::string& user) {
  return PromptBundle{"sys", "ctx\n", user, false};
}

TEST(HttpGenerationTest, WireContractAndAuth) {
  FakeLlm llm;
  auto e = llm.engine();
  e.api_key_env = "CXR_TEST_GENERATION_KEY";
  EXPECT_EQ(code_of([&] { make_generation_backend(e); }), ErrorCode::kInvalidArgument);
  ::setenv("CXR_TEST_GENERATION_KEY", "secret", 1);
  auto backend = make_generation_backend(e);
  const auto r = generate(bundle_with("ok"), e, *backend);
  EXPECT_EQ(r.text, "Generated findings.");
  EXPECT_EQ(llm.last_body.at("system"), "sys");
  EXPECT_EQ(llm.last_body.at("prompt"), "ctx\n\nok");
  EXPECT_EQ(llm.last_body.at("temperature"), 0.0);
  EXPECT_EQ(llm.last_body.at("max_tokens"), e.max_tokens);
  EXPECT_EQ(llm.last_auth, "Bearer secret");
  ::unsetenv("CXR_TEST_GENERATION_KEY");
}

TEST(HttpGenerationTest, RetriesTransientFailures) {
  FakeLlm llm;
  const auto e = llm.engine();
  HttpGenerationBackend backend(e.endpoint, e.timeout);
  EXPECT_EQ(generate(bundle_with("flaky"), e, backend).text, "Generated findings.");
  EXPECT_EQ(llm.calls.load(), 3);
  llm.calls = 0;
  EXPECT_EQ(code_of([&] { generate(bundle_with("down"), e, backend); }), ErrorCode::kBackend);
  EXPECT_EQ(llm.calls.load(), e.max_retries + 1);
}

TEST(HttpGenerationTest, TypedFailures) {
  FakeLlm llm;
  const auto e = llm.engine();
  HttpGenerationBackend backend(e.endpoint, e.timeout);
  EXPECT_EQ(code_of([&] { generate(bundle_with("toolong"), e, backend); }), ErrorCode::kOverLength);
  EXPECT_EQ(code_of([&] { generate(bundle_with("forbidden"), e, backend); }), ErrorCode::kRefusal);
  EXPECT_EQ(code_of([&] { generate(bundle_with("decline"), e, backend); }), ErrorCode::kRefusal);
  EXPECT_EQ(code_of([&] { generate(bundle_with("cutoff"), e, backend); }), ErrorCode::kTruncated);
  EXPECT_EQ(code_of([&] { generate(bundle_with(" "), e, backend); }), ErrorCode::kInvalidArgument);

  auto small = e;
  small.max_prompt_chars = 8;
  llm.calls = 0;
  EXPECT_EQ(code_of([&] { generate(bundle_with("ok"), small, backend); }), ErrorCode::kOverLength);
  EXPECT_EQ(llm.calls.load(), 0);
}

}  // namespace
}  // namespace cxr
