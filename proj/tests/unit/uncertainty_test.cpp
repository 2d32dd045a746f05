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

#include "core/error.hpp"
#include "core/uncertainty.hpp"

namespace cxr {
namespace {

std::optional<std::string> at(double c) {
  return phrase_for(ConfidenceScore(c), "pleural effusion", default_bands());
}

TEST(BandsTest, DefaultBoundaries) {
  EXPECT_EQ(at(0.29), std::nullopt);
  EXPECT_EQ(at(0.0), std::nullopt);
  EXPECT_EQ(at(0.30), "cannot exclude pleural effusion");
  EXPECT_EQ(at(0.49), "cannot exclude pleural effusion");
  EXPECT_EQ(at(0.50), "possible pleural effusion");
  EXPECT_EQ(at(0.69), "possible pleural effusion");
  EXPECT_EQ(at(0.70), "probable pleural effusion");
  EXPECT_EQ(at(0.89), "probable pleural effusion");
  EXPECT_EQ(at(0.90), "there is pleural effusion");
  EXPECT_EQ(at(1.0), "there is pleural effusion");
}

TEST(BandsTest, IndexMatchesPhrase) {
  const auto b = default_bands();
  EXPECT_EQ(band_index(ConfidenceScore(0.2999), b), std::nullopt);
  EXPECT_EQ(band_index(ConfidenceScore(0.3), b), 0u);
  EXPECT_EQ(band_index(ConfidenceScore(0.95), b), 3u);
}

TEST(BandsTest, ValidationRejectsMalformedBands) {
  auto b = default_bands();
  b.bands[2].lower = 0.4;
  EXPECT_THROW(b.validate(), Error);
  b = default_bands();
  b.bands[1].phrase = "possible";
  EXPECT_THROW(b.validate(), Error);
  b = default_bands();
  b.bands[1].phrase = "<pathology> or <pathology>";
  EXPECT_THROW(b.validate(), Error);
  b = default_bands();
  b.suppression_floor = 0.2;
  EXPECT_THROW(b.validate(), Error);
  EXPECT_THROW(ThresholdBands{}.validate(), Error);
}

TEST(BandsTest, JsonRoundTripAndCustomBands) {
  const ThresholdBands custom{{{0.1, "maybe <pathology>"}, {0.6, "<pathology> likely"}}, 0.1};
  EXPECT_EQ(bands_from_json(to_json(custom)), custom);
  EXPECT_EQ(phrase_for(ConfidenceScore(0.6), "edema", custom), "edema likely");
  EXPECT_EQ(phrase_for(ConfidenceScore(0.05), "edema", custom), std::nullopt);
  try {
    bands_from_json(nlohmann::json{{"bands", 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

}  // namespace
}  // namespace cxr
