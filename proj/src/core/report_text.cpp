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

#include "core/report_text.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "core/error.hpp"
#include "core/util.hpp"

namespace cxr {

using nlohmann::json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

// Whether the whitespace at `i` is a sentence break.
bool breaks_at(std::string_view t, std::size_t i) {
  if (i == 0 || !is_space(t[i])) return false;
  if (t[i - 1] != '.' && t[i - 1] != '?') return false;
  // "e.g. " / "i.e. ": word, '.', word, any.
  if (i >= 4 && is_word_char(t[i - 4]) && t[i - 3] == '.' && is_word_char(t[i - 2]))
    return false;
  // "Dr. " / "Mr. ": upper, lower, '.'.
  if (i >= 3 && is_upper(t[i - 3]) && is_lower(t[i - 2]) && t[i - 1] == '.') return false;
  return true;
}

enum class TokenKind { kWord, kComma, kCloser };

struct Token {
  TokenKind kind;
  std::string lower;
  TextSpan span;  // absolute offsets
};

std::vector<Token> tokenize(std::string_view text, TextSpan range) {
  std::vector<Token> out;
  std::size_t i = range.begin;
  while (i < range.end) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < range.end && is_word_char(text[j])) ++j;
      out.push_back({TokenKind::kWord, to_lower(text.substr(i, j - i)), {i, j}});
      i = j;
    } else if (c == '-' || c == '/' || c == '\'' || c == '"' || c == '(' || c == ')') {
      // Joiners and quotes are transparent: "nodule/mass", "right-sided".
      ++i;
    } else {
      const TokenKind kind = c == ',' ? TokenKind::kComma : TokenKind::kCloser;
      out.push_back({kind, std::string(1, c), {i, i + 1}});
      ++i;
    }
  }
  return out;
}

std::vector<std::string> phrase_tokens(std::string_view phrase) {
  std::vector<std::string> out;
  for (auto& t : tokenize(phrase, {0, phrase.size()}))
    if (t.kind == TokenKind::kWord) out.push_back(std::move(t.lower));
  return out;
}

struct Term {
  std::vector<std::string> tokens;
  std::string label;
};

struct Match {
  std::size_t first_token = 0;
  std::size_t token_count = 0;
  const Term* term = nullptr;
};

// Longest match starting at token `pos`, scanning consecutive word tokens.
std::optional<Match> match_at(const std::vector<Token>& toks, std::size_t pos,
                              const std::vector<Term>& terms) {
  for (const auto& term : terms) {  // terms are sorted longest first
    if (pos + term.tokens.size() > toks.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < term.tokens.size() && ok; ++k) {
      const auto& t = toks[pos + k];
      ok = t.kind == TokenKind::kWord && t.lower == term.tokens[k];
    }
    if (ok) return Match{pos, term.tokens.size(), &term};
  }
  return std::nullopt;
}

std::vector<Term> sorted_terms(std::vector<Term> terms) {
  std::stable_sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    return a.tokens.size() > b.tokens.size();
  });
  return terms;
}

bool contains(const std::vector<std::string>& words, const std::string& w) {
  return std::find(words.begin(), words.end(), w) != words.end();
}

}  // namespace

std::vector<TextSpan> sentence_spans(std::string_view text) {
  std::vector<TextSpan> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (e > b) out.push_back({b, e});
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (breaks_at(text, i)) {
      emit(start, i);
      while (i < text.size() && is_space(text[i])) ++i;
      start = i;
    } else {
      ++i;
    }
  }
  emit(start, text.size());
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (auto s : sentence_spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
  return out;
}

ExtractionResult extract_pathologies(std::string_view text, const LabelSet& labels,
                                     const SynonymTable& synonyms,
                                     const NegationRules& rules) {
  require(labels.size() > 0, "extraction needs a non-empty label set");
  std::vector<Term> terms;
  for (const auto& l : labels.labels()) {
    if (labels.is_no_finding(l)) continue;
    auto toks = phrase_tokens(l);
    if (!toks.empty()) terms.push_back({std::move(toks), l});
  }
  for (const auto& [phrase, label] : synonyms) {
    if (!labels.contains(label))
      fail(ErrorCode::kInvalidArgument,
           "synonym '" + phrase + "' maps to unknown label '" + label + "'");
    auto toks = phrase_tokens(phrase);
    if (!toks.empty()) terms.push_back({std::move(toks), label});
  }
  terms = sorted_terms(std::move(terms));

  enum class Scope { kClosed, kLeading, kChain, kAfterConnector };

  ExtractionResult r;
  std::map<std::string, bool> asserted;  // label -> has a positive mention
  const auto sentences = sentence_spans(text);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto toks = tokenize(text, sentences[s]);
    Scope scope = Scope::kClosed;
    int budget = 0;
    std::size_t i = 0;
    while (i < toks.size()) {
      const auto& tok = toks[i];
      if (auto m = match_at(toks, i, terms)) {
        const bool negated = scope != Scope::kClosed;
        const auto b = toks[m->first_token].span.begin;
        const auto e = toks[m->first_token + m->token_count - 1].span.end;
        const auto& label = m->term->label;
        r.evidence[label].push_back(
            Evidence{s, {b, e}, std::string(text.substr(b, e - b)), negated});
        asserted[label] = asserted[label] || !negated;
        if (negated) scope = Scope::kChain;
        i += m->token_count;
        continue;
      }
      switch (tok.kind) {
        case TokenKind::kCloser:
          scope = Scope::kClosed;
          break;
        case TokenKind::kComma:
          if (scope == Scope::kChain) {
            scope = Scope::kAfterConnector;
            budget = rules.max_chain_words;
          }
          break;
        case TokenKind::kWord:
          if (contains(rules.keywords, tok.lower)) {
            scope = Scope::kLeading;
            budget = rules.max_leading_words;
          } else if (contains(rules.terminators, tok.lower)) {
            scope = Scope::kClosed;
          } else if (contains(rules.connectors, tok.lower)) {
            if (scope == Scope::kChain) {
              scope = Scope::kAfterConnector;
              budget = rules.max_chain_words;
            } else if (scope != Scope::kClosed && --budget < 0) {
              scope = Scope::kClosed;
            }
          } else if (scope == Scope::kChain) {
            scope = Scope::kClosed;
          } else if (scope != Scope::kClosed && --budget < 0) {
            scope = Scope::kClosed;
          }
          break;
      }
      ++i;
    }
  }
  for (const auto& [label, positive] : asserted)
    (positive ? r.positive : r.negated).insert(label);
  return r;
}

const std::vector<std::string>& default_temporal_triggers() {
  static const std::vector<std::string> kTriggers{
      "compared", "comparison", "prior",  "previous", "interval",
      "worsening", "improved",  "unchanged", "again",  "study of"};
  return kTriggers;
}

TemporalFlag detect_temporal_language(std::string_view text,
                                      const std::vector<std::string>& triggers) {
  std::vector<Term> terms;
  for (const auto& t : triggers) {
    auto toks = phrase_tokens(t);
    if (!toks.empty()) terms.push_back({std::move(toks), t});
  }
  terms = sorted_terms(std::move(terms));

  TemporalFlag f;
  const auto sentences = sentence_spans(text);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto toks = tokenize(text, sentences[s]);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      // Every trigger is reported, including ones nested in a longer trigger.
      for (const auto& term : terms) {
        if (i + term.tokens.size() > toks.size()) continue;
        bool ok = true;
        for (std::size_t k = 0; k < term.tokens.size() && ok; ++k)
          ok = toks[i + k].kind == TokenKind::kWord && toks[i + k].lower == term.tokens[k];
        if (ok)
          f.triggers.push_back(TemporalTrigger{
              term.label, s, {toks[i].span.begin, toks[i + term.tokens.size() - 1].span.end}});
      }
    }
  }
  f.flagged = !f.triggers.empty();
  return f;
}

SynonymTable synonyms_from_json(const json& j) {
  SynonymTable t;
  try {
    for (const auto& e : j) t[e.at("phrase").get<std::string>()] = e.at("label").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("synonyms: ") + e.what());
  }
  return t;
}

SynonymTable load_synonyms(const std::filesystem::path& path) {
  try {
    return synonyms_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, "synonyms '" + path.string() + "': " + e.what());
  }
}

std::vector<std::string> load_trigger_list(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path)).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "trigger list '" + path.string() + "': " + e.what());
  }
}

json to_json(const ExtractionResult& r) {
  json ev = json::object();
  for (const auto& [label, list] : r.evidence) {
    json arr = json::array();
    for (const auto& e : list)
      arr.push_back({{"sentence", e.sentence},
                     {"begin", e.span.begin},
                     {"end", e.span.end},
                     {"matched", e.matched},
                     {"negated", e.negated}});
    ev[label] = std::move(arr);
  }
  return json{{"positive", r.positive}, {"negated", r.negated}, {"evidence", std::move(ev)}};
}

json to_json(const TemporalFlag& f) {
  json arr = json::array();
  for (const auto& t : f.triggers)
    arr.push_back({{"phrase", t.phrase}, {"sentence", t.sentence},
                   {"begin", t.span.begin}, {"end", t.span.end}});
  return json{{"flagged", f.flagged}, {"triggers", std::move(arr)}};
}

}  // namespace cxr
