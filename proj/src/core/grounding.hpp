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

// Phrase-grounding backends and the lateralization / benchmark logic built on
// them.
//
// Wire contract: POST /ground {"image_id", "phrase"} ->
//   {"max_activation": number, "centroid_x_fraction": number | null}
// 404 means the image is unknown to the backend.
//
// Laterality: "left <pathology>" always names the patient's left. A backend
// centroid is converted to a side in exactly one place, side_from_centroid().

#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

struct GroundingResponse {
  double max_activation = 0.0;
  // Horizontal position of the peak, 0 = image left. Defined only when
  // max_activation > 0.
  std::optional<double> centroid_x_fraction;
};

class GroundingBackend {
 public:
  virtual ~GroundingBackend() = default;
  // Must be safe to call concurrently.
  virtual GroundingResponse ground(std::string_view image_id, std::string_view phrase) = 0;
};

// Planted phrase -> response table. Unplanted phrases on a known image score
// 0; unknown images throw kNotFound.
class StubGroundingBackend : public GroundingBackend {
 public:
  void plant(std::string image_id, std::string_view phrase, GroundingResponse response);
  GroundingResponse ground(std::string_view image_id, std::string_view phrase) override;

  // Fixture: JSON array of {image_id, phrase, max_activation, centroid_x_fraction}.
  static std::unique_ptr<StubGroundingBackend> from_json(const nlohmann::json& fixture);
  static std::unique_ptr<StubGroundingBackend> load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::map<std::string, GroundingResponse>> table_;
};

class HttpGroundingBackend : public GroundingBackend {
 public:
  HttpGroundingBackend(std::string base_url, std::chrono::milliseconds timeout)
      : base_url_(std::move(base_url)), timeout_(timeout) {}
  GroundingResponse ground(std::string_view image_id, std::string_view phrase) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

GroundingResponse grounding_response_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundingResponse& r);

enum class Side { kLeft, kRight, kAbstain };
std::string_view side_name(Side side);

// How a backend's centroid maps to the patient's side. kAsReported treats a
// centroid below 0.5 as left; kRadiological assumes the image shows the
// patient's right on the image left (standard PA display) and mirrors it.
enum class CentroidConvention { kAsReported, kRadiological };
CentroidConvention parse_centroid_convention(std::string_view name);

// The single centroid -> side conversion. 0.5 exactly counts as the right
// half of the image.
Side side_from_centroid(double centroid_x_fraction, CentroidConvention convention);

struct GroundingOutcome {
  std::string pathology;
  Side location = Side::kAbstain;
  ConfidenceScore confidence;  // winning activation clamped to [0, 1]
  std::optional<GroundingResponse> raw;  // the winning response
  GroundingResponse left;
  GroundingResponse right;
};

nlohmann::json to_json(const GroundingOutcome& o);

// Grounds "left <p>" and "right <p>" (p lowercased) concurrently and keeps
// the side with the higher positive activation; ties go left; abstains when
// neither activation is positive. Non-lateralizable labels throw
// kInvalidArgument.
GroundingOutcome lateralize(GroundingBackend& backend, const LabelSet& labels,
                            std::string_view pathology, std::string_view image_id);

enum class OptionChoice { kA, kB, kAbstain };
std::string_view option_choice_name(OptionChoice c);

// Higher positive activation wins (ties go to option a); abstains when
// neither is positive.
OptionChoice benchmark_two_option(GroundingBackend& backend, std::string_view option_a,
                                  std::string_view option_b, std::string_view image_id);

// Grounds the side-free phrase and reads the side from the peak centroid.
Side benchmark_position(GroundingBackend& backend, std::string_view phrase,
                        std::string_view image_id,
                        CentroidConvention convention = CentroidConvention::kAsReported);

}  // namespace cxr
