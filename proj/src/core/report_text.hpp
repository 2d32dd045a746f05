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

// Parsing of generated report text: sentence segmentation, negation-aware
// pathology extraction and temporal-language flagging.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "core/types.hpp"
#include "json.hpp"

namespace cxr {

struct TextSpan {
  std::size_t begin = 0;  // byte offsets into the original text
  std::size_t end = 0;
  friend bool operator==(const TextSpan&, const TextSpan&) = default;
};

// A sentence ends at '.' or '?' followed by whitespace, unless the period
// closes an initialism ("e.g.", "i.e.") or a capitalized two-letter
// abbreviation ("Dr.", "Mr."). The whitespace run at each break is the
// separator; leading and trailing whitespace of the text is dropped.
std::vector<TextSpan> sentence_spans(std::string_view text);
std::vector<std::string> split_sentences(std::string_view text);

// Phrase -> label (e.g. "effusion" -> "Pleural Effusion").
using SynonymTable = std::map<std::string, std::string>;

struct NegationRules {
  std::vector<std::string> keywords{"no", "not", "without", "absent"};
  // Words that join a chain of negated findings.
  std::vector<std::string> connectors{"or", "and", "nor"};
  // Words that close a negation scope.
  std::vector<std::string> terminators{"but", "however", "although", "though",
                                       "except", "yet", "whereas"};
  // Words allowed between the keyword and the first finding
  // ("no evidence of acute ...").
  int max_leading_words = 4;
  // Words allowed between a connector and the next finding
  // ("... or focal consolidation").
  int max_chain_words = 2;
};

struct Evidence {
  std::size_t sentence = 0;
  TextSpan span;
  std::string matched;
  bool negated = false;
};

struct ExtractionResult {
  Findings positive;
  Findings negated;
  std::map<std::string, std::vector<Evidence>> evidence;
};

// Whole-word, case-insensitive matching of label names (the no-finding label
// excepted) and synonyms; overlapping matches resolve to the longest. A label
// asserted anywhere in the report is positive; it is negated only when every
// mention lies in a negation scope.
ExtractionResult extract_pathologies(std::string_view text, const LabelSet& labels,
                                     const SynonymTable& synonyms = {},
                                     const NegationRules& rules = {});

struct TemporalTrigger {
  std::string phrase;
  std::size_t sentence = 0;
  TextSpan span;
};

struct TemporalFlag {
  bool flagged = false;
  std::vector<TemporalTrigger> triggers;
};

const std::vector<std::string>& default_temporal_triggers();

TemporalFlag detect_temporal_language(
    std::string_view text,
    const std::vector<std::string>& triggers = default_temporal_triggers());

// JSON array of {"phrase", "label"} objects.
SynonymTable synonyms_from_json(const nlohmann::json& j);
SynonymTable load_synonyms(const std::filesystem::path& path);
// JSON array of strings.
std::vector<std::string> load_trigger_list(const std::filesystem::path& path);

nlohmann::json to_json(const ExtractionResult& r);
nlohmann::json to_json(const TemporalFlag& f);

}  // namespace cxr
