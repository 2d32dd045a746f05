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
#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "cxragent/cxragent.h"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Dir {
  fs::path path;
  explicit Dir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cxr-capi-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s ? s : "";
  cxr_string_free(s);
  return out;
}

TEST(CApiTest, VersionAndStatusNames) {
  EXPECT_GT(std::strlen(cxr_version()), 0u);
  EXPECT_STREQ(cxr_status_name(CXR_OK), "ok");
  EXPECT_STREQ(cxr_status_name(CXR_E_NOT_FOUND), "not_found");
}

TEST(CApiTest, NullArgumentsAreRejected) {
  cxr_frame* frame = nullptr;
  EXPECT_EQ(cxr_frame_load(nullptr, nullptr, &frame), CXR_E_INVALID_ARGUMENT);
  EXPECT_NE(std::string(cxr_last_error()).size(), 0u);
  EXPECT_EQ(cxr_rouge_l(nullptr, "a", nullptr, nullptr, nullptr), CXR_E_INVALID_ARGUMENT);
  cxr_frame_free(nullptr);
  cxr_probe_free(nullptr);
  cxr_agent_free(nullptr);
  cxr_eval_free(nullptr);
}

TEST(CApiTest, EmbeddingsRoundTrip) {
  Dir dir("emb");
  const float values[6] = {1, 2, 3, 4, 5, 6};
  const auto path = (dir.path / "e.cxre").string();
  ASSERT_EQ(cxr_embeddings_write(path.c_str(), values, 2, 3), CXR_OK);
  float* back = nullptr;
  size_t rows = 0, dim = 0;
  ASSERT_EQ(cxr_embeddings_read(path.c_str(), &back, &rows, &dim), CXR_OK);
  EXPECT_EQ(rows, 2u);
  EXPECT_EQ(dim, 3u);
  EXPECT_EQ(std::memcmp(back, values, sizeof values), 0);
  cxr_floats_free(back);
  EXPECT_EQ(cxr_embeddings_decode("CXRE", 4, &back, &rows, &dim), CXR_E_FORMAT);
  EXPECT_EQ(cxr_embeddings_read((dir.path / "missing").c_str(), &back, &rows, &dim), CXR_E_IO);
}

TEST(CApiTest, SyntheticWorldEndToEnd) {
  Dir dir("world");
  ASSERT_EQ(cxr_fixture_synthesize(40, 7, dir.path.c_str()), CXR_OK) << cxr_last_error();

  cxr_frame* frame = nullptr;
  ASSERT_EQ(cxr_frame_load((dir.path / "manifest.json").c_str(), nullptr, &frame), CXR_OK)
      << cxr_last_error();
  size_t rows = 0, dim = 0;
  ASSERT_EQ(cxr_frame_shape(frame, &rows, &dim), CXR_OK);
  EXPECT_EQ(rows, 40u);
  EXPECT_EQ(dim, 14u);
  char* summary = nullptr;
  ASSERT_EQ(cxr_frame_summary_json(frame, &summary), CXR_OK);
  EXPECT_EQ(json::parse(take(summary)).at("rows"), 40);

  cxr_agent* agent = nullptr;
  ASSERT_EQ(cxr_agent_open((dir.path / "agent.json").c_str(), &agent), CXR_OK) << cxr_last_error();
  float* emb = nullptr;
  ASSERT_EQ(cxr_embeddings_read((dir.path / "embeddings.cxre").c_str(), &emb, &rows, &dim), CXR_OK);
  char* report = nullptr;
  char* trace = nullptr;
  ASSERT_EQ(cxr_agent_run(agent, "synth-0001", emb, dim, "findings", &report, &trace), CXR_OK)
      << cxr_last_error();
  EXPECT_FALSE(take(report).empty());
  EXPECT_EQ(json::parse(take(trace)).at("image_id"), "synth-0001");
  char* listing = nullptr;
  ASSERT_EQ(cxr_agent_list_findings(agent, "synth-0001", emb, dim, &listing), CXR_OK);
  EXPECT_TRUE(json::parse(take(listing)).contains("extraction"));
  EXPECT_EQ(cxr_agent_run(agent, "synth-0001", emb, dim - 1, "findings", &report, &trace),
            CXR_E_INVALID_ARGUMENT);
  EXPECT_NE(std::string(cxr_last_error()).find("[detection]"), std::string::npos);
  cxr_floats_free(emb);

  char* batch = nullptr;
  ASSERT_EQ(cxr_agent_batch(agent, frame, (dir.path / "out").c_str(), "list", &batch), CXR_OK);
  EXPECT_EQ(json::parse(take(batch)).at("succeeded"), 40);

  cxr_frame *train = nullptr, *val = nullptr, *test = nullptr;
  ASSERT_EQ(cxr_frame_random_split(frame, 0.5, 0.25, 0.25, 1, &train, &val, &test), CXR_OK);
  cxr_probe* probe = nullptr;
  ASSERT_EQ(cxr_probe_train(train, R"({"batch_size": 8, "epochs": 3, "learning_rate": 0.1})", &probe), CXR_OK)
      << cxr_last_error();
  char* eval = nullptr;
  ASSERT_EQ(cxr_probe_evaluate(probe, test, 0.5, &eval), CXR_OK);
  EXPECT_TRUE(json::parse(take(eval)).contains("accuracy"));
  const auto probe_path = (dir.path / "trained.bin").string();
  ASSERT_EQ(cxr_probe_save(probe, probe_path.c_str()), CXR_OK);
  cxr_probe* loaded = nullptr;
  ASSERT_EQ(cxr_probe_load(probe_path.c_str(), &loaded), CXR_OK);
  std::vector<float> zero(dim, 0.0f);
  char* det = nullptr;
  ASSERT_EQ(cxr_probe_predict(loaded, zero.data(), dim, &det), CXR_OK);
  EXPECT_EQ(json::parse(take(det)).size(), 14u);
  char *grid = nullptr, *board = nullptr;
  cxr_probe* best = nullptr;
  ASSERT_EQ(cxr_probe_grid_search(
                train, val,
                R"({"space": {"batch_sizes": [8], "epochs": [1, 2], "learning_rates": [0.1]}, "seed": 3})",
                &grid, &board, &best),
            CXR_OK)
      << cxr_last_error();
  EXPECT_EQ(json::parse(take(grid)).at("leaderboard").size(), 2u);
  EXPECT_FALSE(take(board).empty());

  for (auto* f : {train, val, test, frame}) cxr_frame_free(f);
  for (auto* p : {probe, loaded, best}) cxr_probe_free(p);
  cxr_agent_free(agent);
}

TEST(CApiTest, LocalisationBenchmark) {
  cxr_agent* agent = nullptr;
  ASSERT_EQ(cxr_agent_open(CXR_TEST_DATA "/bench_agent.json", &agent), CXR_OK) << cxr_last_error();
  char *j = nullptr, *text = nullptr;
  ASSERT_EQ(cxr_agent_bench_localisation(agent, CXR_TEST_DATA "/localisation_cases.json", "two_option", &j, &text),
            CXR_OK)
      << cxr_last_error();
  const auto r = json::parse(take(j));
  EXPECT_EQ(r.at("correct"), 5);
  EXPECT_FALSE(take(text).empty());
  EXPECT_EQ(cxr_agent_bench_localisation(agent, CXR_TEST_DATA "/localisation_cases.json", "sideways", &j, &text),
            CXR_E_INVALID_ARGUMENT);
  cxr_agent_free(agent);
}

TEST(CApiTest, EvaluationService) {
  cxr_eval_service* svc = nullptr;
  ASSERT_EQ(cxr_eval_open(CXR_TEST_DATA "/eval_cases.json", nullptr, &svc), CXR_OK) << cxr_last_error();
  char* sid = nullptr;
  ASSERT_EQ(cxr_eval_create_session(svc, R"(["c3"])", "rater", 4, &sid), CXR_OK);
  const std::string session = take(sid);
  char* view = nullptr;
  ASSERT_EQ(cxr_eval_case_view(svc, session.c_str(), 1, &view), CXR_OK);
  EXPECT_EQ(take(view).find("m-a"), std::string::npos);
  json sub{{"session_id", session}, {"case_id", "c3"}, {"abnormal", false}, {"slots", json::array()}};
  for (int k = 1; k <= 4; ++k)
    sub["slots"].push_back({{"slot", k}, {"rank", k}, {"brevity", "good"}, {"accuracy", 3}});
  char* ack = nullptr;
  ASSERT_EQ(cxr_eval_submit(svc, sub.dump().c_str(), &ack), CXR_OK) << cxr_last_error();
  EXPECT_FALSE(json::parse(take(ack)).at("replaced").get<bool>());
  sub["slots"][0]["rank"] = 2;
  EXPECT_EQ(cxr_eval_submit(svc, sub.dump().c_str(), &ack), CXR_E_VALIDATION);
  char* out = nullptr;
  ASSERT_EQ(cxr_eval_export(svc, nullptr, 0, &out), CXR_OK);
  EXPECT_EQ(json::parse(take(out)).at("submissions"), 1);
  EXPECT_EQ(cxr_eval_export(svc, R"({"dataset": "mimic"})", 1, &out), CXR_E_NOT_FOUND);
  cxr_eval_free(svc);
}

TEST(CApiTest, TextUtilities) {
  char* r = nullptr;
  ASSERT_EQ(cxr_extract_pathologies("No pneumothorax. Small effusion.", nullptr, CXR_REPO_DATA "/synonyms.json", &r),
            CXR_OK);
  const auto j = json::parse(take(r));
  EXPECT_EQ(j.at("positive"), json::array({"Pleural Effusion"}));
  EXPECT_EQ(j.at("negated"), json::array({"Pneumothorax"}));
  ASSERT_EQ(cxr_detect_temporal("Unchanged from prior.", &r), CXR_OK);
  EXPECT_TRUE(json::parse(take(r)).at("flagged").get<bool>());
  double p = 0, rec = 0, f = 0;
  ASSERT_EQ(cxr_rouge_l("a b c", "a c", &p, &rec, &f), CXR_OK);
  EXPECT_DOUBLE_EQ(p, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(rec, 1.0);
}

}  // namespace
