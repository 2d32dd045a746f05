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

// Slow, obviously-correct reference implementations and fixture builders
// shared by the unit and acceptance tests.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core/embedding_store.hpp"
#include "core/types.hpp"
#include "core/util.hpp"

namespace cxr::oracle {

// Pairwise enumeration: P(pos > neg) + 0.5 P(pos == neg).
inline std::optional<double> pairwise_auc(const std::vector<double>& scores,
                                          const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

inline std::size_t exact_hits(const std::vector<Findings>& pred, const std::vector<Findings>& ref) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == ref[i];
  return n;
}

inline std::pair<std::size_t, std::size_t> single_counts(const std::vector<Findings>& pred,
                                                         const std::vector<Findings>& ref) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (const auto& r : ref[i]) {
      ++total;
      hit += pred[i].count(r);
    }
  return {hit, total};
}

// Repeatedly picks the highest remaining score, earliest label first.
inline bool top_k_hit(const std::vector<double>& scores, const std::vector<std::string>& names,
                      Findings ref, const std::optional<std::string>& no_finding,
                      std::size_t k) {
  if (ref.empty() && no_finding) ref.insert(*no_finding);
  std::vector<bool> used(scores.size(), false);
  for (std::size_t pick = 0; pick < k; ++pick) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (!used[i] && (best == scores.size() || scores[i] > scores[best])) best = i;
    used[best] = true;
    if (!ref.count(names[best])) return false;
  }
  return true;
}

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) cur += c;
    else if (c >= 'A' && c <= 'Z') cur += static_cast<char>(c - 'A' + 'a');
    else if (!cur.empty()) out.push_back(std::exchange(cur, {}));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Memoized recursion over suffixes.
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    if (i == a.size() || j == b.size()) return std::size_t{0};
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::size_t v = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[{i, j}] = v;
    return v;
  };
  return go(0, 0);
}

inline double rouge_f1(const std::string& cand, const std::string& ref) {
  const auto c = words(cand), r = words(ref);
  const double l = static_cast<double>(lcs(c, r));
  if (l == 0) return 0.0;
  const double p = l / c.size(), q = l / r.size();
  return 2 * p * q / (p + q);
}

// -(y log s + (1 - y) log(1 - s)) in long double, with log s = -log1p(exp(-z)).
inline long double bce_reference(long double z, long double y) {
  const long double log_s = -std::log1p(std::exp(-z));
  const long double log_not_s = -z + log_s;
  return -(y * log_s + (1.0L - y) * log_not_s);
}

inline double naive_sigmoid_affine(const std::vector<double>& w, double b,
                                   const std::vector<float>& x) {
  long double z = b;
  for (std::size_t i = 0; i < x.size(); ++i) z += static_cast<long double>(w[i]) * x[i];
  return static_cast<double>(1.0L / (1.0L + std::exp(-z)));
}

inline std::shared_ptr<const LabelSet> numbered_labels(std::size_t n, bool with_no_finding) {
  std::vector<std::string> names;
  if (with_no_finding) names.push_back("No Finding");
  for (std::size_t i = names.size(); i < n; ++i) names.push_back("L" + std::to_string(i));
  std::optional<std::string> nf;
  if (with_no_finding) nf = "No Finding";
  return std::make_shared<const LabelSet>("synthetic", names, nf);
}

// Linearly separable multi-label frame: label l is on iff x[l] > 0, with
// features pushed away from zero by `margin`.
inline EmbeddingFrame separable_frame(std::size_t rows, std::size_t labels, std::size_t dim,
                                      std::uint64_t seed, double margin = 0.5) {
  DeterministicRng rng(seed);
  auto ls = numbered_labels(labels, false);
  DatasetManifest m{ls, {}, "separable"};
  std::vector<float> values;
  for (std::size_t r = 0; r < rows; ++r) {
    ScanRecord rec{"row-" + std::to_string(r), std::nullopt, std::vector<std::uint8_t>(labels, 0),
                   std::nullopt};
    for (std::size_t d = 0; d < dim; ++d) {
      double v = rng.normal();
      if (d < labels) {
        const bool on = rng.uniform() < 0.5;
        v = (on ? 1.0 : -1.0) * (margin + std::abs(v));
        rec.labels[d] = on;
      }
      values.push_back(static_cast<float>(v));
    }
    m.records.push_back(std::move(rec));
  }
  return EmbeddingFrame(std::move(m), EmbeddingMatrix(rows, dim, std::move(values)));
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("cxr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace cxr::oracle
