#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plotcast/lemma.hpp"

namespace plotcast {

struct RakePhrase {
  std::vector<std::string> words;
  double score = 0.0;
  int first_position = 0;  // token index of the first occurrence

  std::string text() const;
};

struct RakeResult {
  std::vector<RakePhrase> phrases;  // top phrases, best first
  std::map<std::string, double> word_scores;
  std::vector<std::string> storyline;  // one word per phrase, in text order
};

/// Phrases are maximal runs of tokens between stopwords and punctuation.
/// Word score = degree / frequency; phrase score = sum of its word scores.
RakeResult rake(std::span<const std::string> tokens, const StopwordList& stopwords, int max_phrases);

std::vector<std::string> rake_keywords(std::string_view text, int max_phrases,
                                       const StopwordList& stopwords = default_stopwords());

}  // namespace plotcast
