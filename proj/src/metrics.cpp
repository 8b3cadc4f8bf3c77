#include "plotcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace plotcast {

namespace {

void check_aligned(std::size_t a, std::size_t b) {
  if (a != b)
    throw std::invalid_argument("hypotheses and references differ in length (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  if (a == 0) throw std::invalid_argument("metric needs at least one hypothesis");
}

std::map<std::vector<std::string>, long> ngrams(std::span<const std::string> tokens, int n) {
  std::map<std::vector<std::string>, long> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

}  // namespace

NgramCounts ngram_precision(std::span<const Tokens> hypotheses, std::span<const Tokens> references, int n) {
  check_aligned(hypotheses.size(), references.size());
  NgramCounts c;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = ngrams(hypotheses[i], n);
    const auto ref = ngrams(references[i], n);
    for (const auto& [gram, count] : hyp) {
      c.total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) c.clipped += std::min(count, it->second);
    }
  }
  return c;
}

double bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  check_aligned(hypotheses.size(), references.size());
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const NgramCounts c = ngram_precision(hypotheses, references, n);
    const double num = c.clipped > 0 ? static_cast<double>(c.clipped) : kBleuEpsilon;
    const double den = c.total > 0 ? static_cast<double>(c.total) : 1.0;
    log_sum += std::log(num / den);
  }
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<double>(hypotheses[i].size());
    ref_len += static_cast<double>(references[i].size());
  }
  if (hyp_len == 0) return 0.0;
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return std::min(1.0, bp * std::exp(log_sum / 4.0));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(hypothesis, reference));
  if (lcs == 0) return 0.0;
  const double r = lcs / static_cast<double>(reference.size());
  const double p = lcs / static_cast<double>(hypothesis.size());
  constexpr double beta2 = 1.2 * 1.2;
  return (1.0 + beta2) * r * p / (r + beta2 * p);
}

double rouge_l_corpus(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  check_aligned(hypotheses.size(), references.size());
  double sum = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) sum += rouge_l(hypotheses[i], references[i]);
  return sum / static_cast<double>(hypotheses.size());
}

MeteorDetail meteor_detail(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  MeteorDetail d;
  std::vector<int> align(hypothesis.size(), -1);
  std::vector<bool> used(reference.size(), false);
  auto pass = [&](auto&& equal) {
    for (std::size_t i = 0; i < hypothesis.size(); ++i) {
      if (align[i] >= 0) continue;
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!used[j] && equal(hypothesis[i], reference[j])) {
          align[i] = static_cast<int>(j);
          used[j] = true;
          break;
        }
      }
    }
  };
  pass([](const std::string& a, const std::string& b) { return a == b; });
  pass([](const std::string& a, const std::string& b) { return stem(a) == stem(b); });

  int prev = -2;
  bool in_chunk = false;
  for (int j : align) {
    if (j < 0) {
      in_chunk = false;
      continue;
    }
    ++d.matches;
    if (!in_chunk || j != prev + 1) ++d.chunks;
    in_chunk = true;
    prev = j;
  }
  if (d.matches == 0) return d;
  d.precision = static_cast<double>(d.matches) / static_cast<double>(hypothesis.size());
  d.recall = static_cast<double>(d.matches) / static_cast<double>(reference.size());
  d.f_mean = 10.0 * d.precision * d.recall / (d.recall + 9.0 * d.precision);
  d.penalty = 0.5 * std::pow(static_cast<double>(d.chunks) / d.matches, 3);
  d.score = d.f_mean * (1.0 - d.penalty);
  return d;
}

double meteor_lite(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  return meteor_detail(hypothesis, reference).score;
}

double meteor_corpus(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  check_aligned(hypotheses.size(), references.size());
  double sum = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) sum += meteor_lite(hypotheses[i], references[i]);
  return sum / static_cast<double>(hypotheses.size());
}

bool TokenEmbeddings::contains(const std::string& token) const {
  return vocab_.contains(token) && !Vocab::is_special(vocab_.encode(token));
}

Eigen::VectorXd TokenEmbeddings::vector(const std::string& token) const {
  if (!contains(token)) return Eigen::VectorXd::Zero(table_.cols());
  return table_.row(vocab_.encode(token)).transpose();
}

namespace {

double dense_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace

double TokenEmbeddings::cosine(const std::string& a, const std::string& b) const {
  return dense_cosine(vector(a), vector(b));
}

double TfidfBagEncoder::cosine(std::span<const std::string> a, std::span<const std::string> b) const {
  std::map<std::string, double> ba, bb;
  for (const auto& w : content_tokens(a, stopwords_)) ba[w] += idf_.idf(w);
  for (const auto& w : content_tokens(b, stopwords_)) bb[w] += idf_.idf(w);
  double dot = 0, na = 0, nb = 0;
  for (const auto& [w, x] : ba) {
    na += x * x;
    if (auto it = bb.find(w); it != bb.end()) dot += x * it->second;
  }
  for (const auto& [w, y] : bb) nb += y * y;
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double EmbeddingMeanEncoder::cosine(std::span<const std::string> a, std::span<const std::string> b) const {
  auto mean = [&](std::span<const std::string> tokens) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings_->dimension());
    int n = 0;
    for (const auto& t : tokens)
      if (embeddings_->contains(t)) {
        sum += embeddings_->vector(t);
        ++n;
      }
    return n > 0 ? Eigen::VectorXd(sum / n) : sum;
  };
  return dense_cosine(mean(a), mean(b));
}

std::unique_ptr<TextEncoder> make_encoder(const std::string& name, const WordIdf& idf,
                                          std::shared_ptr<const TokenEmbeddings> embeddings) {
  if (name == "tfidf_bag") return std::make_unique<TfidfBagEncoder>(idf);
  if (name == "model_embedding_mean") {
    if (!embeddings) throw ConfigError("encoder model_embedding_mean needs trained token embeddings");
    return std::make_unique<EmbeddingMeanEncoder>(std::move(embeddings));
  }
  throw ConfigError("unknown encoder '" + name + "' (expected tfidf_bag or model_embedding_mean)");
}

double embed_cosine(std::string_view a, std::string_view b, const TextEncoder& encoder) {
  return encoder.cosine(tokenize(a), tokenize(b));
}

CoverageResult coverage(std::span<const std::string> story_tokens, std::span<const std::string> plot_tokens,
                        const CoverageOptions& options) {
  const StopwordList& stop = options.stopwords ? *options.stopwords : default_stopwords();
  const auto story = content_tokens(story_tokens, stop);
  const auto plot = content_tokens(plot_tokens, stop);
  CoverageResult r;
  r.story_tokens = static_cast<int>(story.size());
  r.plot_tokens = static_cast<int>(plot.size());
  if (story.empty() || plot.empty()) {
    r.empty_input = true;
    return r;
  }
  std::vector<std::string> story_stems, plot_stems;
  for (const auto& t : story) story_stems.push_back(stem(t));
  for (const auto& t : plot) plot_stems.push_back(stem(t));

  std::vector<std::tuple<double, int, int>> pairs;
  for (std::size_t i = 0; i < story.size(); ++i)
    for (std::size_t j = 0; j < plot.size(); ++j) {
      double sim = 0.0;
      if (story[i] == plot[j] || story_stems[i] == plot_stems[j])
        sim = 1.0;
      else if (options.embeddings)
        sim = options.embeddings->cosine(story[i], plot[j]);
      if (sim >= options.threshold) pairs.emplace_back(sim, static_cast<int>(i), static_cast<int>(j));
    }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<bool> story_used(story.size(), false), plot_used(plot.size(), false);
  for (const auto& [sim, i, j] : pairs) {
    if (story_used[static_cast<std::size_t>(i)] || plot_used[static_cast<std::size_t>(j)]) continue;
    story_used[static_cast<std::size_t>(i)] = plot_used[static_cast<std::size_t>(j)] = true;
    ++r.matched;
  }
  r.story_coverage = static_cast<double>(r.matched) / r.story_tokens;
  r.plot_coverage = static_cast<double>(r.matched) / r.plot_tokens;
  return r;
}

}  // namespace plotcast
