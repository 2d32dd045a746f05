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

#include "core/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "core/error.hpp"
#include "core/http_client.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

// Lowercase with single spaces.
std::string phrase_key(std::string_view phrase) {
  std::string out;
  bool space = false;
  for (char c : to_lower(trim(phrase))) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

void StubGroundingBackend::plant(std::string image_id, std::string_view phrase,
                                 GroundingResponse response) {
  std::lock_guard lock(mu_);
  table_[std::move(image_id)][phrase_key(phrase)] = response;
}

GroundingResponse StubGroundingBackend::ground(std::string_view image_id,
                                               std::string_view phrase) {
  std::lock_guard lock(mu_);
  auto img = table_.find(std::string(image_id));
  if (img == table_.end())
    fail(ErrorCode::kNotFound, "grounding stub: unknown image '" + std::string(image_id) + "'");
  auto it = img->second.find(phrase_key(phrase));
  if (it == img->second.end()) return GroundingResponse{0.0, std::nullopt};
  return it->second;
}

std::unique_ptr<StubGroundingBackend> StubGroundingBackend::from_json(const json& fixture) {
  auto stub = std::make_unique<StubGroundingBackend>();
  try {
    for (const auto& e : fixture) {
      stub->plant(e.at("image_id").get<std::string>(), e.at("phrase").get<std::string>(),
                  grounding_response_from_json(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("grounding fixture: ") + e.what());
  }
  return stub;
}

std::unique_ptr<StubGroundingBackend> StubGroundingBackend::load(
    const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "grounding fixture '" + path.string() + "': " + e.what());
  }
}

json StubGroundingBackend::to_json() const {
  std::lock_guard lock(mu_);
  json arr = json::array();
  for (const auto& [image, phrases] : table_)
    for (const auto& [phrase, r] : phrases) {
      json e = cxr::to_json(r);
      e["image_id"] = image;
      e["phrase"] = phrase;
      arr.push_back(std::move(e));
    }
  return arr;
}

GroundingResponse grounding_response_from_json(const json& j) {
  GroundingResponse r;
  try {
    r.max_activation = j.at("max_activation").get<double>();
    if (j.contains("centroid_x_fraction") && !j["centroid_x_fraction"].is_null())
      r.centroid_x_fraction = j["centroid_x_fraction"].get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kBackend, std::string("grounding response: ") + e.what());
  }
  if (!std::isfinite(r.max_activation))
    fail(ErrorCode::kBackend, "grounding response: non-finite activation");
  if (r.centroid_x_fraction &&
      !(*r.centroid_x_fraction >= 0.0 && *r.centroid_x_fraction <= 1.0))
    fail(ErrorCode::kBackend, "grounding response: centroid outside [0, 1]");
  if (r.max_activation <= 0.0) r.centroid_x_fraction.reset();
  return r;
}

json to_json(const GroundingResponse& r) {
  return json{{"max_activation", r.max_activation},
              {"centroid_x_fraction",
               r.centroid_x_fraction ? json(*r.centroid_x_fraction) : json(nullptr)}};
}

GroundingResponse HttpGroundingBackend::ground(std::string_view image_id,
                                               std::string_view phrase) {
  const auto res = post_json(base_url_, "/ground",
                             json{{"image_id", image_id}, {"phrase", phrase}}, timeout_);
  if (res.status == 404)
    fail(ErrorCode::kNotFound, "grounding backend: unknown image '" + std::string(image_id) + "'");
  if (res.status != 200)
    fail(ErrorCode::kBackend, "grounding backend returned HTTP " + std::to_string(res.status));
  try {
    return grounding_response_from_json(json::parse(res.body));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kBackend, std::string("grounding backend: ") + e.what());
  }
}

std::string_view side_name(Side side) {
  switch (side) {
    case Side::kLeft: return "left";
    case Side::kRight: return "right";
    case Side::kAbstain: return "abstain";
  }
  return "abstain";
}

CentroidConvention parse_centroid_convention(std::string_view name) {
  if (name == "as_reported") return CentroidConvention::kAsReported;
  if (name == "radiological") return CentroidConvention::kRadiological;
  fail(ErrorCode::kInvalidArgument, "unknown centroid convention '" + std::string(name) + "'");
}

Side side_from_centroid(double x, CentroidConvention convention) {
  const Side image_side = x < 0.5 ? Side::kLeft : Side::kRight;
  if (convention == CentroidConvention::kAsReported) return image_side;
  return image_side == Side::kLeft ? Side::kRight : Side::kLeft;
}

json to_json(const GroundingOutcome& o) {
  return json{{"pathology", o.pathology},
              {"location", side_name(o.location)},
              {"confidence", o.confidence.value()},
              {"left", to_json(o.left)},
              {"right", to_json(o.right)}};
}

GroundingOutcome lateralize(GroundingBackend& backend, const LabelSet& labels,
                            std::string_view pathology, std::string_view image_id) {
  if (!labels.contains(pathology))
    fail(ErrorCode::kInvalidArgument, "unknown pathology '" + std::string(pathology) + "'");
  if (!labels.is_lateralizable(pathology))
    fail(ErrorCode::kInvalidArgument,
         "'" + std::string(pathology) + "' is not lateralizable");

  const std::string p = to_lower(pathology);
  const std::string img(image_id);
  auto left_future = std::async(std::launch::async,
                                [&] { return backend.ground(img, "left " + p); });
  GroundingResponse right;
  try {
    right = backend.ground(img, "right " + p);
  } catch (...) {
    left_future.wait();
    throw;
  }
  const GroundingResponse left = left_future.get();

  GroundingOutcome o;
  o.pathology = std::string(pathology);
  o.left = left;
  o.right = right;
  const bool left_wins = left.max_activation >= right.max_activation;
  const auto& winner = left_wins ? left : right;
  if (winner.max_activation > 0.0) {
    o.location = left_wins ? Side::kLeft : Side::kRight;
    o.confidence = ConfidenceScore(clamp01(winner.max_activation));
    o.raw = winner;
  }
  return o;
}

std::string_view option_choice_name(OptionChoice c) {
  switch (c) {
    case OptionChoice::kA: return "a";
    case OptionChoice::kB: return "b";
    case OptionChoice::kAbstain: return "abstain";
  }
  return "abstain";
}

OptionChoice benchmark_two_option(GroundingBackend& backend, std::string_view option_a,
                                  std::string_view option_b, std::string_view image_id) {
  const auto a = backend.ground(image_id, option_a);
  const auto b = backend.ground(image_id, option_b);
  if (a.max_activation <= 0.0 && b.max_activation <= 0.0) return OptionChoice::kAbstain;
  return a.max_activation >= b.max_activation ? OptionChoice::kA : OptionChoice::kB;
}

Side benchmark_position(GroundingBackend& backend, std::string_view phrase,
                        std::string_view image_id, CentroidConvention convention) {
  const auto r = backend.ground(image_id, phrase);
  if (r.max_activation <= 0.0 || !r.centroid_x_fraction) return Side::kAbstain;
  return side_from_centroid(*r.centroid_x_fraction, convention);
}

}  // namespace cxr
