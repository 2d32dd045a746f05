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

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

inline constexpr std::string_view kPathologyPlaceholder = "<pathology>";

struct Band {
  double lower = 0.0;    // inclusive
  std::string phrase;    // contains kPathologyPlaceholder exactly once
  friend bool operator==(const Band&, const Band&) = default;
};

// Confidence -> radiology phrase. Bands are lower-inclusive and run up to the
// next band's bound; confidences below the floor are not reported.
struct ThresholdBands {
  std::vector<Band> bands;
  double suppression_floor = 0.0;

  // Throws kInvalidArgument unless bounds are strictly increasing within
  // [0, 1], the first bound equals the floor and every phrase holds the
  // placeholder exactly once.
  void validate() const;

  friend bool operator==(const ThresholdBands&, const ThresholdBands&) = default;
};

// floor 0.3: cannot exclude / possible / probable / there is.
ThresholdBands default_bands();

// Index of the band containing `confidence`, or nullopt below the floor.
std::optional<std::size_t> band_index(ConfidenceScore confidence, const ThresholdBands& bands);

std::optional<std::string> phrase_for(ConfidenceScore confidence, std::string_view pathology,
                                      const ThresholdBands& bands);

nlohmann::json to_json(const ThresholdBands& b);
ThresholdBands bands_from_json(const nlohmann::json& j);

}  // namespace cxr
