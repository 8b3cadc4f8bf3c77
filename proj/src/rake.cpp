#include "plotcast/rake.hpp"

#include <algorithm>

#include "plotcast/text.hpp"

namespace plotcast {

std::string RakePhrase::text() const {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

RakeResult rake(std::span<const std::string> tokens, const StopwordList& stopwords, int max_phrases) {
  struct Occurrence {
    std::vector<std::string> words;
    int position;
  };
  std::vector<Occurrence> runs;
  Occurrence current{{}, 0};
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    const bool boundary = i == tokens.size() || !has_alnum(tokens[i]) || stopwords.contains(tokens[i]);
    if (boundary) {
      if (!current.words.empty()) runs.push_back(std::move(current));
      current = {{}, static_cast<int>(i) + 1};
    } else {
      if (current.words.empty()) current.position = static_cast<int>(i);
      current.words.push_back(tokens[i]);
    }
  }

  std::map<std::string, double> degree, frequency;
  for (const auto& run : runs)
    for (const auto& w : run.words) {
      degree[w] += static_cast<double>(run.words.size());
      frequency[w] += 1.0;
    }
  RakeResult result;
  for (const auto& [w, f] : frequency) result.word_scores[w] = degree[w] / f;

  std::map<std::vector<std::string>, RakePhrase> distinct;
  for (const auto& run : runs) {
    auto [it, inserted] = distinct.try_emplace(run.words);
    if (!inserted) continue;
    it->second.words = run.words;
    it->second.first_position = run.position;
    for (const auto& w : run.words) it->second.score += result.word_scores[w];
  }
  std::vector<RakePhrase> ranked;
  for (auto& [key, phrase] : distinct) ranked.push_back(std::move(phrase));
  std::sort(ranked.begin(), ranked.end(), [](const RakePhrase& a, const RakePhrase& b) {
    return a.score > b.score || (a.score == b.score && a.first_position < b.first_position);
  });
  if (static_cast<int>(ranked.size()) > std::max(max_phrases, 0)) ranked.resize(static_cast<std::size_t>(std::max(max_phrases, 0)));
  result.phrases = ranked;

  std::sort(ranked.begin(), ranked.end(),
            [](const RakePhrase& a, const RakePhrase& b) { return a.first_position < b.first_position; });
  for (const auto& phrase : ranked) {
    const std::string* best = &phrase.words.front();
    for (const auto& w : phrase.words)
      if (result.word_scores[w] > result.word_scores[*best]) best = &w;
    result.storyline.push_back(*best);
  }
  return result;
}

std::vector<std::string> rake_keywords(std::string_view text, int max_phrases, const StopwordList& stopwords) {
  const auto tokens = tokenize(text);
  return rake(tokens, stopwords, max_phrases).storyline;
}

}  // namespace plotcast
