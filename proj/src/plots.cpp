#include "plotcast/plots.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

namespace plotcast {

WordIdf WordIdf::fit(std::span<const StoryBlock> train_blocks, const StopwordList& stopwords) {
  WordIdf table;
  table.n_blocks_ = static_cast<int>(train_blocks.size());
  for (const auto& block : train_blocks) {
    std::set<std::string> seen;
    for (const auto& s : block.sentences)
      for (auto& w : content_tokens(s.tokens, stopwords)) seen.insert(std::move(w));
    for (const auto& w : seen) ++table.df_[w];
  }
  return table;
}

double WordIdf::idf(const std::string& word) const {
  if (n_blocks_ <= 0) return 1.0;
  auto it = df_.find(word);
  const int df = it == df_.end() ? 1 : it->second;
  return std::log(static_cast<double>(n_blocks_) / df);
}

Json WordIdf::to_json() const {
  Json df = Json::object();
  for (const auto& [w, c] : df_) df[w] = c;
  return Json{{"n_blocks", n_blocks_}, {"df", std::move(df)}};
}

WordIdf WordIdf::from_json(const Json& j) {
  WordIdf t;
  t.n_blocks_ = j.at("n_blocks").get<int>();
  for (const auto& [w, c] : j.at("df").items()) t.df_[w] = c.get<int>();
  return t;
}

namespace {

using Bag = std::map<std::string, double>;

void add_to_bag(Bag& bag, const Sentence& s, const WordIdf& idf, const StopwordList& stopwords) {
  for (const auto& w : content_tokens(s.tokens, stopwords)) bag[w] += idf.idf(w);
}

double bag_cosine(const Bag& a, const Bag& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [w, x] : a) {
    na += x * x;
    auto it = b.find(w);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [w, y] : b) nb += y * y;
  if (na <= 0 || nb <= 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double candidate_score(const SentenceTriple& candidate, const StoryBlock& block, const WordIdf& idf,
                       const StopwordList& stopwords) {
  const int n = static_cast<int>(block.sentences.size());
  if (!(0 <= candidate[0] && candidate[0] < candidate[1] && candidate[1] < candidate[2] && candidate[2] < n))
    throw std::invalid_argument("candidate must be an ascending triple of sentence indices");
  Bag cand, whole;
  for (int i : candidate) add_to_bag(cand, block.sentences[static_cast<std::size_t>(i)], idf, stopwords);
  for (const auto& s : block.sentences) add_to_bag(whole, s, idf, stopwords);
  return bag_cosine(cand, whole);
}

PlotSummary make_plot(const StoryBlock& block, const SentenceTriple& triple) {
  PlotSummary plot;
  plot.book_id = block.book_id;
  plot.index = block.index;
  plot.sentence_indices = triple;
  for (int i : triple) {
    if (!plot.text.empty()) plot.text.push_back(' ');
    plot.text += block.sentences[static_cast<std::size_t>(i)].text;
  }
  plot.token_count = static_cast<int>(tokenize(plot.text).size());
  return plot;
}

PlotSummary extract_plot(const StoryBlock& block, const WordIdf& idf, const StopwordList& stopwords) {
  const int n = static_cast<int>(block.sentences.size());
  if (n < 3) throw std::invalid_argument("a plot needs a block of at least three sentences");

  // Sentence-by-word matrix of idf-weighted counts over the block's own words.
  std::map<std::string, int> column;
  std::vector<std::vector<std::string>> words(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    words[static_cast<std::size_t>(i)] = content_tokens(block.sentences[static_cast<std::size_t>(i)].tokens, stopwords);
    for (const auto& w : words[static_cast<std::size_t>(i)]) column.emplace(w, 0);
  }
  int next = 0;
  for (auto& [w, c] : column) c = next++;

  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(column.size()));
  for (int i = 0; i < n; ++i)
    for (const auto& w : words[static_cast<std::size_t>(i)]) weights(i, column[w]) += idf.idf(w);

  const Eigen::VectorXd block_bag = weights.colwise().sum().transpose();
  const double block_norm = block_bag.norm();
  const Eigen::VectorXd dots = weights * block_bag;
  const Eigen::MatrixXd gram = weights * weights.transpose();

  SentenceTriple best{0, 1, 2};
  double best_score = -2.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        const double norm2 = gram(i, i) + gram(j, j) + gram(k, k) + 2.0 * (gram(i, j) + gram(i, k) + gram(j, k));
        double score = 0.0;
        if (norm2 > 0 && block_norm > 0) score = (dots[i] + dots[j] + dots[k]) / (std::sqrt(norm2) * block_norm);
        if (score > best_score) {
          best_score = score;
          best = {i, j, k};
        }
      }
  return make_plot(block, best);
}

Json plot_to_json(const PlotSummary& plot) {
  return Json{{"book_id", plot.book_id},
              {"index", plot.index},
              {"sentence_indices", {plot.sentence_indices[0], plot.sentence_indices[1], plot.sentence_indices[2]}},
              {"text", plot.text}};
}

PlotSummary plot_from_json(const Json& j) {
  PlotSummary plot;
  plot.book_id = j.at("book_id").get<std::string>();
  plot.index = j.at("index").get<int>();
  const auto idx = j.at("sentence_indices").get<std::vector<int>>();
  if (idx.size() != 3) throw std::runtime_error("plot record needs exactly three sentence indices");
  plot.sentence_indices = {idx[0], idx[1], idx[2]};
  plot.text = j.at("text").get<std::string>();
  plot.token_count = static_cast<int>(tokenize(plot.text).size());
  return plot;
}

}  // namespace plotcast
