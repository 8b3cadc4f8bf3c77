#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plotcast/lemma.hpp"
#include "plotcast/plots.hpp"
#include "plotcast/text.hpp"

namespace plotcast {

using Tokens = std::vector<std::string>;

struct NgramCounts {
  long clipped = 0;
  long total = 0;
};

/// Corpus-level clipped n-gram matches against a single reference per hypothesis.
NgramCounts ngram_precision(std::span<const Tokens> hypotheses, std::span<const Tokens> references, int n);

inline constexpr double kBleuEpsilon = 1e-9;

/// Corpus BLEU-4: uniform weights, brevity penalty, zero match counts floored at kBleuEpsilon.
double bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS F-measure with beta = 1.2.
double rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double rouge_l_corpus(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

struct MeteorDetail {
  int matches = 0;
  int chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_mean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

/// Exact-then-stem unigram alignment, F_mean = 10PR/(R+9P), penalty 0.5 (chunks/matches)^3.
MeteorDetail meteor_detail(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double meteor_lite(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double meteor_corpus(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

/// Trained token embeddings (rows indexed by vocab id), used for cosine similarity.
class TokenEmbeddings {
public:
  TokenEmbeddings(const Vocab& vocab, Eigen::MatrixXd table) : vocab_(vocab), table_(std::move(table)) {}
  bool contains(const std::string& token) const;
  Eigen::VectorXd vector(const std::string& token) const;
  double cosine(const std::string& a, const std::string& b) const;
  int dimension() const { return static_cast<int>(table_.cols()); }

private:
  Vocab vocab_;
  Eigen::MatrixXd table_;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TextEncoder {
public:
  virtual ~TextEncoder() = default;
  virtual std::string name() const = 0;
  /// Cosine of the two encodings; 0 when either is the zero vector.
  virtual double cosine(std::span<const std::string> a, std::span<const std::string> b) const = 0;
};

/// Content-word bag weighted by word idf.
class TfidfBagEncoder : public TextEncoder {
public:
  TfidfBagEncoder(WordIdf idf, StopwordList stopwords = default_stopwords())
      : idf_(std::move(idf)), stopwords_(std::move(stopwords)) {}
  std::string name() const override { return "tfidf_bag"; }
  double cosine(std::span<const std::string> a, std::span<const std::string> b) const override;

private:
  WordIdf idf_;
  StopwordList stopwords_;
};

/// Mean of trained token embeddings over in-vocabulary tokens.
class EmbeddingMeanEncoder : public TextEncoder {
public:
  explicit EmbeddingMeanEncoder(std::shared_ptr<const TokenEmbeddings> embeddings)
      : embeddings_(std::move(embeddings)) {}
  std::string name() const override { return "model_embedding_mean"; }
  double cosine(std::span<const std::string> a, std::span<const std::string> b) const override;

private:
  std::shared_ptr<const TokenEmbeddings> embeddings_;
};

/// "tfidf_bag" or "model_embedding_mean"; anything else is a ConfigError.
std::unique_ptr<TextEncoder> make_encoder(const std::string& name, const WordIdf& idf,
                                          std::shared_ptr<const TokenEmbeddings> embeddings);

double embed_cosine(std::string_view a, std::string_view b, const TextEncoder& encoder);

struct CoverageResult {
  double story_coverage = 0.0;
  double plot_coverage = 0.0;
  int matched = 0;
  int story_tokens = 0;
  int plot_tokens = 0;
  bool empty_input = false;
};

struct CoverageOptions {
  double threshold = 0.7;
  const TokenEmbeddings* embeddings = nullptr;  // without it only exact/stem matches count
  const StopwordList* stopwords = nullptr;      // defaults to the built-in list
};

/// Greedy one-to-one alignment of content tokens by descending similarity.
CoverageResult coverage(std::span<const std::string> story_tokens, std::span<const std::string> plot_tokens,
                        const CoverageOptions& options = {});

}  // namespace plotcast
