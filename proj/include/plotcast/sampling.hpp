#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "plotcast/transformer.hpp"

namespace plotcast {

struct SamplerConfig {
  int top_k = 100;
  double temperature = 0.8;
  double repetition_penalty = 3.0;
  int min_len = 36;  // generated tokens, START and END excluded
  int max_len = 76;
  bool ban_unk = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Logits at one decoding step, before and after the repetition penalty.
/// Masked entries are -inf in both.
struct SampleStep {
  int position = 0;
  Eigen::VectorXd masked_logits;
  Eigen::VectorXd penalized_logits;
  std::vector<int> penalized_ids;
  int chosen = -1;
};

using StepObserver = std::function<void(const SampleStep&)>;

/// Applies the CTRL-style penalty in place: positive logits are divided by
/// `penalty`, negative ones multiplied, for every id in `generated`.
void apply_repetition_penalty(Eigen::Ref<Eigen::VectorXd> logits, std::span<const int> generated, double penalty);

/// Indices of the k largest finite logits; ties go to the lower id.
std::vector<int> top_k_indices(const Eigen::VectorXd& logits, int k);

/// Softmax restricted to `keep` after dividing by temperature.
Eigen::VectorXd restricted_softmax(const Eigen::VectorXd& logits, std::span<const int> keep, double temperature);

/// Autoregressive top-k sampling with the KV-cached decoder. Returns the
/// generated ids without START and END.
template <typename Scalar>
std::vector<int> sample_plot(const nn::Seq2SeqModel<Scalar>& model, std::span<const int> source,
                             const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast, const SamplerConfig& config,
                             const StepObserver& observer = {});

/// Argmax decoding under the same masks and repetition penalty, recomputing
/// the full decoder at every step (no cache).
template <typename Scalar>
std::vector<int> greedy_decode(const nn::Seq2SeqModel<Scalar>& model, std::span<const int> source,
                               const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast,
                               const SamplerConfig& config);

}  // namespace plotcast
