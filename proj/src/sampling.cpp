#include "plotcast/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "plotcast/random.hpp"
#include "plotcast/text.hpp"

namespace plotcast {

void SamplerConfig::validate() const {
  if (top_k < 1) throw std::invalid_argument("top_k must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (repetition_penalty < 1.0) throw std::invalid_argument("repetition_penalty must be >= 1");
  if (min_len < 0 || min_len >= max_len) throw std::invalid_argument("require 0 <= min_len < max_len");
}

void apply_repetition_penalty(Eigen::Ref<Eigen::VectorXd> logits, std::span<const int> generated, double penalty) {
  std::vector<bool> seen(static_cast<std::size_t>(logits.size()), false);
  for (int id : generated) {
    if (id < 0 || id >= logits.size() || seen[static_cast<std::size_t>(id)]) continue;
    seen[static_cast<std::size_t>(id)] = true;
    double& x = logits[id];
    x = x > 0 ? x / penalty : x * penalty;
  }
}

std::vector<int> top_k_indices(const Eigen::VectorXd& logits, int k) {
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (std::isfinite(logits[i])) ids.push_back(static_cast<int>(i));
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), [&](int a, int b) {
    return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
  });
  ids.resize(keep);
  return ids;
}

Eigen::VectorXd restricted_softmax(const Eigen::VectorXd& logits, std::span<const int> keep, double temperature) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(logits.size());
  if (keep.empty()) return p;
  double max_v = -std::numeric_limits<double>::infinity();
  for (int id : keep) max_v = std::max(max_v, logits[id] / temperature);
  double sum = 0.0;
  for (int id : keep) sum += p[id] = std::exp(logits[id] / temperature - max_v);
  return p / sum;
}

namespace {

template <typename Scalar>
void check_compatible(const nn::Seq2SeqModel<Scalar>& model, const SamplerConfig& config) {
  config.validate();
  if (config.max_len + 2 > model.config().max_tgt_len)
    throw std::invalid_argument("sampler max_len " + std::to_string(config.max_len) +
                                " does not fit the model's max_tgt_len " +
                                std::to_string(model.config().max_tgt_len));
  if (model.config().vocab_size <= Vocab::kNumSpecials) throw std::invalid_argument("model has no content tokens");
}

/// Masks ids that may never be emitted, and END while the output is short.
void mask_logits(Eigen::VectorXd& logits, std::size_t generated, const SamplerConfig& config) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  logits[Vocab::kPad] = kNegInf;
  logits[Vocab::kStart] = kNegInf;
  if (config.ban_unk) logits[Vocab::kUnk] = kNegInf;
  if (static_cast<int>(generated) < config.min_len) logits[Vocab::kEnd] = kNegInf;
}

}  // namespace

template <typename Scalar>
std::vector<int> sample_plot(const nn::Seq2SeqModel<Scalar>& model, std::span<const int> source,
                             const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast, const SamplerConfig& config,
                             const StepObserver& observer) {
  check_compatible(model, config);
  Rng rng(config.seed);
  nn::IncrementalDecoder<Scalar> decoder(model, nn::encode(model, source, frame, forecast));
  std::vector<int> out;
  int input = Vocab::kStart;
  while (static_cast<int>(out.size()) < config.max_len) {
    Eigen::VectorXd logits = decoder.step(input).transpose().template cast<double>();
    mask_logits(logits, out.size(), config);
    SampleStep step;
    if (observer) {
      step.position = static_cast<int>(out.size());
      step.masked_logits = logits;
    }
    apply_repetition_penalty(logits, out, config.repetition_penalty);
    const std::vector<int> keep = top_k_indices(logits, config.top_k);
    const Eigen::VectorXd probs = restricted_softmax(logits, keep, config.temperature);

    int chosen = keep.back();
    double u = rng.uniform();
    for (int id : keep) {
      u -= probs[id];
      if (u < 0) {
        chosen = id;
        break;
      }
    }
    if (observer) {
      step.penalized_logits = logits;
      step.penalized_ids = out;
      std::sort(step.penalized_ids.begin(), step.penalized_ids.end());
      step.penalized_ids.erase(std::unique(step.penalized_ids.begin(), step.penalized_ids.end()),
                               step.penalized_ids.end());
      step.chosen = chosen;
      observer(step);
    }
    if (chosen == Vocab::kEnd) break;
    out.push_back(chosen);
    input = chosen;
  }
  return out;
}

template <typename Scalar>
std::vector<int> greedy_decode(const nn::Seq2SeqModel<Scalar>& model, std::span<const int> source,
                               const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast,
                               const SamplerConfig& config) {
  check_compatible(model, config);
  const auto memory = nn::encode(model, source, frame, forecast);
  std::vector<int> prefix{Vocab::kStart};
  std::vector<int> out;
  while (static_cast<int>(out.size()) < config.max_len) {
    const auto logits_all = nn::decoder_logits(model, memory, prefix);
    Eigen::VectorXd logits = logits_all.row(logits_all.rows() - 1).transpose().template cast<double>();
    mask_logits(logits, out.size(), config);
    apply_repetition_penalty(logits, out, config.repetition_penalty);
    const int best = top_k_indices(logits, 1).front();
    if (best == Vocab::kEnd) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

template std::vector<int> sample_plot<float>(const nn::Seq2SeqModel<float>&, std::span<const int>,
                                             const Eigen::VectorXd&, const Eigen::VectorXd&, const SamplerConfig&,
                                             const StepObserver&);
template std::vector<int> sample_plot<double>(const nn::Seq2SeqModel<double>&, std::span<const int>,
                                              const Eigen::VectorXd&, const Eigen::VectorXd&, const SamplerConfig&,
                                              const StepObserver&);
template std::vector<int> greedy_decode<float>(const nn::Seq2SeqModel<float>&, std::span<const int>,
                                               const Eigen::VectorXd&, const Eigen::VectorXd&, const SamplerConfig&);
template std::vector<int> greedy_decode<double>(const nn::Seq2SeqModel<double>&, std::span<const int>,
                                                const Eigen::VectorXd&, const Eigen::VectorXd&, const SamplerConfig&);

}  // namespace plotcast
