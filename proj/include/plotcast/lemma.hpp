#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace plotcast {

/// Candidate base forms of a lowercased token, most literal first. The token
/// itself is always the first candidate. Rules strip -s/-es/-ed/-ing/-ly,
/// undouble a final consonant ("stopped" -> "stop") and try e-restoration
/// ("hoped" -> "hope"); the caller decides which candidate exists.
std::vector<std::string> lemma_candidates(std::string_view token);

/// Single canonical stem used for equality matching: first stripped candidate,
/// undoubled, with a final silent 'e' removed.
std::string stem(std::string_view token);

class StopwordList {
public:
  /// Built-in English list (function words plus common auxiliaries).
  StopwordList();
  explicit StopwordList(std::vector<std::string> words);
  static StopwordList load(const std::string& path);

  bool contains(std::string_view token) const;
  std::size_t size() const { return words_.size(); }

private:
  std::unordered_set<std::string> words_;
};

const StopwordList& default_stopwords();

/// Tokens that carry content: contain an alphanumeric character and are not stopwords.
std::vector<std::string> content_tokens(std::span<const std::string> tokens,
                                        const StopwordList& stopwords = default_stopwords());

}  // namespace plotcast
