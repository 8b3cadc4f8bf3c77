#pragma once

#include <array>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "plotcast/jsonl.hpp"
#include "plotcast/lemma.hpp"
#include "plotcast/text.hpp"

namespace plotcast {

/// Word-level inverse document frequencies; a document is one story block.
class WordIdf {
public:
  WordIdf() = default;
  static WordIdf fit(std::span<const StoryBlock> train_blocks, const StopwordList& stopwords = default_stopwords());

  /// ln(n_blocks / df); words unseen in training get the rarest-word weight ln(n_blocks).
  double idf(const std::string& word) const;
  int n_blocks() const { return n_blocks_; }
  const std::unordered_map<std::string, int>& df() const { return df_; }

  Json to_json() const;
  static WordIdf from_json(const Json& j);

private:
  std::unordered_map<std::string, int> df_;
  int n_blocks_ = 0;
};

using SentenceTriple = std::array<int, 3>;

struct PlotSummary {
  std::string book_id;
  int index = 0;
  SentenceTriple sentence_indices{0, 1, 2};
  std::string text;
  int token_count = 0;

  std::vector<std::string> tokens() const { return tokenize(text); }
};

/// Cosine between the TF-IDF bag of the candidate's sentences and that of the whole block.
double candidate_score(const SentenceTriple& candidate, const StoryBlock& block, const WordIdf& idf,
                       const StopwordList& stopwords = default_stopwords());

/// Best-scoring ascending triple over all C(n,3) candidates; ties go to the
/// lexicographically smallest triple.
PlotSummary extract_plot(const StoryBlock& block, const WordIdf& idf,
                         const StopwordList& stopwords = default_stopwords());

PlotSummary make_plot(const StoryBlock& block, const SentenceTriple& triple);

Json plot_to_json(const PlotSummary& plot);
PlotSummary plot_from_json(const Json& j);

}  // namespace plotcast
