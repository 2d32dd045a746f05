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

#include "core/pipeline.hpp"
#include "core/report_text.hpp"
#include "core/util.hpp"
#include "support/text_cases.hpp"

namespace cxr {
namespace {

const LabelSet& labels() {
  static const LabelSet ls = chexpert_label_set();
  return ls;
}

const SynonymTable& synonyms() {
  static const SynonymTable s = load_synonyms(std::filesystem::path(CXR_REPO_DATA) / "synonyms.json");
  return s;
}

TEST(SentenceTest, SplitsOnTerminalPunctuation) {
  EXPECT_EQ(split_sentences("  Heart is normal. Lungs are clear?  No effusion.  "),
            (std::vector<std::string>{"Heart is normal.", "Lungs are clear?", "No effusion."}));
  EXPECT_EQ(split_sentences("Seen by Dr. Smith today. Done."),
            (std::vector<std::string>{"Seen by Dr. Smith today.", "Done."}));
  EXPECT_EQ(split_sentences("Devices, e.g. a line, are present. Fine."),
            (std::vector<std::string>{"Devices, e.g. a line, are present.", "Fine."}));
  EXPECT_EQ(split_sentences("Version 1.5 is used."), (std::vector<std::string>{"Version 1.5 is used."}));
  EXPECT_TRUE(split_sentences("   ").empty());
}

TEST(SentenceTest, SpansIndexTheOriginalText) {
  const std::string text = " A b.  C d. ";
  const auto spans = sentence_spans(text);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(text.substr(spans[0].begin, spans[0].end - spans[0].begin), "A b.");
  EXPECT_EQ(text.substr(spans[1].begin, spans[1].end - spans[1].begin), "C d.");
}

TEST(ExtractionTest, Corpus) {
  const auto corpus =
      nlohmann::json::parse(read_file(std::filesystem::path(CXR_TEST_DATA) / "extraction_corpus.json"));
  ASSERT_GE(corpus.size(), 50u);
  for (const auto& c : corpus) {
    const auto text = c.at("text").get<std::string>();
    const auto r = extract_pathologies(text, labels(), synonyms());
    EXPECT_EQ(r.positive, c.at("positive").get<Findings>()) << text;
    EXPECT_EQ(r.negated, c.at("negated").get<Findings>()) << text;
  }
}

TEST(ExtractionTest, GeneratedTwoSentenceCases) {
  for (const auto& c : oracle::two_sentence_cases(labels(), 500, 17)) {
    const auto r = extract_pathologies(c.text, labels(), synonyms());
    EXPECT_EQ(r.positive, c.positive) << c.text;
    EXPECT_EQ(r.negated, c.negated) << c.text;
  }
}

TEST(ExtractionTest, MixedMentionsCountAsPositive) {
  const auto r = extract_pathologies("No edema. Mild edema at the bases.", labels(), synonyms());
  EXPECT_EQ(r.positive, Findings{"Edema"});
  EXPECT_TRUE(r.negated.empty());
  ASSERT_EQ(r.evidence.at("Edema").size(), 2u);
  EXPECT_TRUE(r.evidence.at("Edema")[0].negated);
  EXPECT_FALSE(r.evidence.at("Edema")[1].negated);
  EXPECT_EQ(r.evidence.at("Edema")[1].sentence, 1u);
}

TEST(ExtractionTest, TerminatorsCloseNegation) {
  const auto r = extract_pathologies("No pneumothorax but there is consolidation.", labels(), synonyms());
  EXPECT_EQ(r.positive, Findings{"Consolidation"});
  EXPECT_EQ(r.negated, Findings{"Pneumothorax"});
}

TEST(ExtractionTest, LeadingBudgetLimitsScope) {
  const auto near = extract_pathologies("No definite evidence of acute pneumonia.", labels(), synonyms());
  EXPECT_EQ(near.negated, Findings{"Pneumonia"});
  const auto far = extract_pathologies("No change in the appearance of the known pneumonia.", labels(),
                                       synonyms());
  EXPECT_EQ(far.positive, Findings{"Pneumonia"});
}

TEST(ExtractionTest, SynonymsAndLongestMatch) {
  const auto r = extract_pathologies("Small right pleural effusions. Nodule/mass in the left apex.",
                                     labels(), synonyms());
  EXPECT_EQ(r.positive, (Findings{"Lung Lesion", "Pleural Effusion"}));
  EXPECT_TRUE(r.negated.empty());
  EXPECT_TRUE(extract_pathologies("No finding to report.", labels(), synonyms()).positive.empty());
  EXPECT_TRUE(extract_pathologies("Effusiveness.", labels(), synonyms()).positive.empty());
}

TEST(TemporalTest, FlagsTriggersWithPositions) {
  const std::string text = "Heart size is normal. Compared to the prior study, edema has improved.";
  const auto f = detect_temporal_language(text);
  EXPECT_TRUE(f.flagged);
  ASSERT_EQ(f.triggers.size(), 3u);
  EXPECT_EQ(f.triggers[0].phrase, "compared");
  EXPECT_EQ(f.triggers[0].sentence, 1u);
  EXPECT_EQ(text.substr(f.triggers[0].span.begin, f.triggers[0].span.end - f.triggers[0].span.begin),
            "Compared");
  EXPECT_FALSE(detect_temporal_language("No acute cardiopulmonary abnormality.").flagged);
  EXPECT_FALSE(detect_temporal_language("Priority finding.").flagged);
  const auto listed = load_trigger_list(std::filesystem::path(CXR_REPO_DATA) / "temporal_triggers.json");
  EXPECT_EQ(listed, default_temporal_triggers());
}

TEST(SynonymTest, RejectsUnknownShape) {
  EXPECT_THROW(synonyms_from_json(nlohmann::json{{"phrase", "x"}}), Error);
}

}  // namespace
}  // namespace cxr
