#include "plotcast/lemma.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "plotcast/text.hpp"

namespace plotcast {

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  });
}

bool doubled_consonant(std::string_view s) {
  if (s.size() < 3) return false;
  const char a = s[s.size() - 1];
  const char b = s[s.size() - 2];
  return a == b && !is_vowel(a) && a != 'l' && a != 's' && a != 'z';
}

void push_unique(std::vector<std::string>& out, std::string s) {
  if (s.size() < 2) return;
  if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
}

// -ed / -ing style stem: plain, undoubled, then e-restored.
void push_verb_stem(std::vector<std::string>& out, std::string_view s) {
  const std::string base(s);
  push_unique(out, base);
  if (doubled_consonant(base)) push_unique(out, base.substr(0, base.size() - 1));
  if (!base.empty() && base.back() != 'e' && base.back() != 'y') push_unique(out, base + "e");
}

const char* const kDefaultStopwords[] = {
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves", "shall", "may", "might", "must", "upon", "yet", "also", "ever", "every",
    "n't", "'s", "'re", "'ve", "'ll", "'d", "'m", "s", "t", "let", "us", "one", "said", "say",
};

}  // namespace

std::vector<std::string> lemma_candidates(std::string_view token) {
  std::vector<std::string> out;
  out.emplace_back(token);
  if (!all_alpha(token)) return out;
  const std::size_t n = token.size();

  if (n > 4 && token.ends_with("ies")) push_unique(out, std::string(token.substr(0, n - 3)) + "y");
  if (n > 4 && token.ends_with("ied")) push_unique(out, std::string(token.substr(0, n - 3)) + "y");
  if (n > 4 && token.ends_with("ing")) push_verb_stem(out, token.substr(0, n - 3));
  if (n > 3 && token.ends_with("ed")) {
    push_verb_stem(out, token.substr(0, n - 2));
    push_unique(out, std::string(token.substr(0, n - 1)));  // "loved" -> "love"
  }
  if (n > 3 && token.ends_with("es")) {
    push_unique(out, std::string(token.substr(0, n - 2)));
    push_unique(out, std::string(token.substr(0, n - 1)));
  } else if (n > 2 && token.ends_with('s') && !token.ends_with("ss") && !token.ends_with("us")) {
    push_unique(out, std::string(token.substr(0, n - 1)));
  }
  if (n > 5 && token.ends_with("ily")) push_unique(out, std::string(token.substr(0, n - 3)) + "y");
  if (n > 4 && token.ends_with("ly")) push_unique(out, std::string(token.substr(0, n - 2)));
  return out;
}

std::string stem(std::string_view token) {
  const auto candidates = lemma_candidates(token);
  std::string s = candidates.size() > 1 ? candidates[1] : candidates[0];
  if (doubled_consonant(s)) s.pop_back();
  if (s.size() > 3 && s.back() == 'e') s.pop_back();
  return s;
}

StopwordList::StopwordList() : words_(std::begin(kDefaultStopwords), std::end(kDefaultStopwords)) {}

StopwordList::StopwordList(std::vector<std::string> words) : words_(words.begin(), words.end()) {}

StopwordList StopwordList::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword list: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    for (char& c : line) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    words.push_back(line);
  }
  return StopwordList(std::move(words));
}

bool StopwordList::contains(std::string_view token) const { return words_.count(std::string(token)) > 0; }

const StopwordList& default_stopwords() {
  static const StopwordList list;
  return list;
}

std::vector<std::string> content_tokens(std::span<const std::string> tokens, const StopwordList& stopwords) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (has_alnum(t) && !stopwords.contains(t)) out.push_back(t);
  return out;
}

}  // namespace plotcast
