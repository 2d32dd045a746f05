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

#include "core/uncertainty.hpp"

#include "core/error.hpp"

namespace cxr {

using nlohmann::json;

void ThresholdBands::validate() const {
  require(!bands.empty(), "threshold bands are empty");
  require(suppression_floor >= 0.0 && suppression_floor <= 1.0,
          "suppression floor must lie in [0, 1]");
  require(bands.front().lower == suppression_floor,
          "the first band must start at the suppression floor");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& b = bands[i];
    require(b.lower >= 0.0 && b.lower <= 1.0, "band bounds must lie in [0, 1]");
    if (i > 0) require(b.lower > bands[i - 1].lower, "band bounds must be strictly increasing");
    const auto first = b.phrase.find(kPathologyPlaceholder);
    require(first != std::string::npos &&
                b.phrase.find(kPathologyPlaceholder, first + 1) == std::string::npos,
            "band phrase '" + b.phrase + "' must contain <pathology> exactly once");
  }
}

ThresholdBands default_bands() {
  return ThresholdBands{{{0.3, "cannot exclude <pathology>"},
                         {0.5, "possible <pathology>"},
                         {0.7, "probable <pathology>"},
                         {0.9, "there is <pathology>"}},
                        0.3};
}

std::optional<std::size_t> band_index(ConfidenceScore confidence, const ThresholdBands& bands) {
  bands.validate();
  const double c = confidence.value();
  if (c < bands.suppression_floor) return std::nullopt;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < bands.bands.size(); ++i)
    if (bands.bands[i].lower <= c) idx = i;
  return idx;
}

std::optional<std::string> phrase_for(ConfidenceScore confidence, std::string_view pathology,
                                      const ThresholdBands& bands) {
  auto idx = band_index(confidence, bands);
  if (!idx) return std::nullopt;
  std::string out = bands.bands[*idx].phrase;
  out.replace(out.find(kPathologyPlaceholder), kPathologyPlaceholder.size(), pathology);
  return out;
}

json to_json(const ThresholdBands& b) {
  json arr = json::array();
  for (const auto& band : b.bands) arr.push_back({{"lower", band.lower}, {"phrase", band.phrase}});
  return json{{"suppression_floor", b.suppression_floor}, {"bands", std::move(arr)}};
}

ThresholdBands bands_from_json(const json& j) {
  ThresholdBands b;
  try {
    b.suppression_floor = j.at("suppression_floor").get<double>();
    for (const auto& e : j.at("bands"))
      b.bands.push_back({e.at("lower").get<double>(), e.at("phrase").get<std::string>()});
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("threshold bands: ") + e.what());
  }
  b.validate();
  return b;
}

}  // namespace cxr
