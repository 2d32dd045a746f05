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
#include "core/grounding.hpp"
#include "core/pipeline.hpp"
#include "httplib.h"

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

class GroundingFixture : public ::testing::Test {
 protected:
  LabelSet labels = chexpert_label_set();
  StubGroundingBackend stub;
};

TEST_F(GroundingFixture, StubLooksUpNormalizedPhrases) {
  stub.plant("img", "Left  Pleural Effusion", {0.8, 0.3});
  EXPECT_DOUBLE_EQ(stub.ground("img", "left pleural effusion").max_activation, 0.8);
  EXPECT_DOUBLE_EQ(stub.ground("img", "right pleural effusion").max_activation, 0.0);
  EXPECT_EQ(code_of([&] { stub.ground("other", "x"); }), ErrorCode::kNotFound);
  const auto copy = StubGroundingBackend::from_json(stub.to_json());
  EXPECT_DOUBLE_EQ(*copy->ground("img", "left pleural effusion").centroid_x_fraction, 0.3);
}

TEST_F(GroundingFixture, LateralizePicksHigherActivation) {
  stub.plant("img", "left pneumothorax", {0.4, 0.2});
  stub.plant("img", "right pneumothorax", {0.7, 0.8});
  const auto o = lateralize(stub, labels, "Pneumothorax", "img");
  EXPECT_EQ(o.location, Side::kRight);
  EXPECT_DOUBLE_EQ(o.confidence.value(), 0.7);
  EXPECT_DOUBLE_EQ(o.left.max_activation, 0.4);
}

TEST_F(GroundingFixture, LateralizeTieGoesLeft) {
  stub.plant("img", "left edema", {0.5, 0.2});
  stub.plant("img", "right edema", {0.5, 0.8});
  EXPECT_EQ(lateralize(stub, labels, "Edema", "img").location, Side::kLeft);
}

TEST_F(GroundingFixture, LateralizeAbstainsWithoutPositiveActivation) {
  stub.plant("img", "left edema", {-0.2, std::nullopt});
  stub.plant("img", "right edema", {0.0, std::nullopt});
  const auto o = lateralize(stub, labels, "Edema", "img");
  EXPECT_EQ(o.location, Side::kAbstain);
  EXPECT_DOUBLE_EQ(o.confidence.value(), 0.0);
  EXPECT_FALSE(o.raw.has_value());
}

TEST_F(GroundingFixture, LateralizeClampsConfidence) {
  stub.plant("img", "left edema", {3.5, 0.1});
  EXPECT_DOUBLE_EQ(lateralize(stub, labels, "Edema", "img").confidence.value(), 1.0);
}

TEST_F(GroundingFixture, NonLateralizableRejected) {
  stub.plant("img", "left cardiomegaly", {0.9, 0.1});
  EXPECT_EQ(code_of([&] { lateralize(stub, labels, "Cardiomegaly", "img"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { lateralize(stub, labels, "Not A Label", "img"); }),
            ErrorCode::kInvalidArgument);
}

TEST(CentroidTest, SingleConversionPoint) {
  EXPECT_EQ(side_from_centroid(0.2, CentroidConvention::kAsReported), Side::kLeft);
  EXPECT_EQ(side_from_centroid(0.5, CentroidConvention::kAsReported), Side::kRight);
  EXPECT_EQ(side_from_centroid(0.2, CentroidConvention::kRadiological), Side::kRight);
  EXPECT_EQ(side_from_centroid(0.8, CentroidConvention::kRadiological), Side::kLeft);
  EXPECT_EQ(parse_centroid_convention("radiological"), CentroidConvention::kRadiological);
  EXPECT_THROW(parse_centroid_convention("mirror"), Error);
}

TEST_F(GroundingFixture, BenchmarkHelpers) {
  stub.plant("img", "left effusion", {0.3, 0.2});
  stub.plant("img", "right effusion", {0.6, 0.9});
  stub.plant("img", "effusion", {0.6, 0.9});
  EXPECT_EQ(benchmark_two_option(stub, "left effusion", "right effusion", "img"), OptionChoice::kB);
  EXPECT_EQ(benchmark_two_option(stub, "left x", "right x", "img"), OptionChoice::kAbstain);
  EXPECT_EQ(benchmark_position(stub, "effusion", "img"), Side::kRight);
  EXPECT_EQ(benchmark_position(stub, "nothing", "img"), Side::kAbstain);
}

TEST(GroundingResponseTest, ValidatesBackendPayload) {
  EXPECT_EQ(code_of([] { grounding_response_from_json(json{{"centroid_x_fraction", 0.5}}); }),
            ErrorCode::kBackend);
  EXPECT_EQ(code_of([] {
              grounding_response_from_json(json{{"max_activation", 1.0}, {"centroid_x_fraction", 1.5}});
            }),
            ErrorCode::kBackend);
  const auto r = grounding_response_from_json(json{{"max_activation", -1.0}, {"centroid_x_fraction", 0.2}});
  EXPECT_FALSE(r.centroid_x_fraction.has_value());
}

class TestServer {
 public:
  explicit TestServer(std::function<void(httplib::Server&)> routes) {
    routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpGroundingTest, SpeaksTheWireContract) {
  std::atomic<int> calls{0};
  TestServer server([&](httplib::Server& s) {
    s.Post("/ground", [&](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      const auto body = json::parse(req.body);
      if (body.at("image_id") == "missing") {
        res.status = 404;
        return;
      }
      if (body.at("image_id") == "broken") {
        res.set_content("not json", "application/json");
        return;
      }
      if (body.at("image_id") == "slow") std::this_thread::sleep_for(std::chrono::milliseconds(600));
      const bool left = body.at("phrase").get<std::string>().rfind("left", 0) == 0;
      res.set_content(json{{"max_activation", left ? 0.9 : 0.4}, {"centroid_x_fraction", 0.3}}.dump(),
                      "application/json");
    });
  });
  HttpGroundingBackend backend(server.url(), std::chrono::milliseconds(300));
  const auto labels = chexpert_label_set();
  const auto o = lateralize(backend, labels, "Pneumothorax", "img-1");
  EXPECT_EQ(o.location, Side::kLeft);
  EXPECT_DOUBLE_EQ(o.confidence.value(), 0.9);
  EXPECT_EQ(calls.load(), 2);
  EXPECT_EQ(code_of([&] { backend.ground("missing", "left edema"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { backend.ground("broken", "left edema"); }), ErrorCode::kBackend);
  EXPECT_EQ(code_of([&] { backend.ground("slow", "left edema"); }), ErrorCode::kTimeout);
}

TEST(HttpGroundingTest, UnreachableBackend) {
  HttpGroundingBackend backend("http://127.0.0.1:1", std::chrono::milliseconds(200));
  const auto c = code_of([&] { backend.ground("img", "left edema"); });
  EXPECT_TRUE(c == ErrorCode::kBackend || c == ErrorCode::kTimeout);
}

}  // namespace
}  // namespace cxr
