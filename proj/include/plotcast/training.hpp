#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "plotcast/jsonl.hpp"
#include "plotcast/transformer.hpp"

namespace plotcast::nn {

Json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const Json& j);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename Scalar>
struct OptimizerState {
  typename Seq2SeqModel<Scalar>::Vector m, v;
  long step = 0;
};

/// Decoupled weight decay: p -= lr * wd * p, then the Adam update.
template <typename Scalar>
void adamw_update(typename Seq2SeqModel<Scalar>::Vector& params, const typename Seq2SeqModel<Scalar>::Vector& grads,
                  OptimizerState<Scalar>& state, const AdamWConfig& config, double lr);

/// Cosine decay from base_lr to zero over total_steps after a linear warmup.
double cosine_lr(double base_lr, long step, long total_steps, long warmup = 0);

class NonFiniteLoss : public std::runtime_error {
public:
  NonFiniteLoss(long step, std::uint64_t batch_hash);
  long step() const { return step_; }
  std::uint64_t batch_hash() const { return batch_hash_; }

private:
  long step_;
  std::uint64_t batch_hash_;
};

std::uint64_t batch_hash(std::span<const Example> batch);

struct BatchLoss {
  double loss_sum = 0.0;
  long tokens = 0;
  long correct = 0;

  double mean() const { return tokens > 0 ? loss_sum / static_cast<double>(tokens) : 0.0; }
  double perplexity() const;
  double accuracy() const { return tokens > 0 ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0; }
  BatchLoss& operator+=(const LossResult& r);
};

/// Mean non-PAD token cross-entropy over the batch and its exact gradient.
/// Examples are reduced in a fixed number of chunks so the summation order,
/// and hence the result, does not depend on the worker count.
template <typename Scalar>
BatchLoss batch_gradient(const Seq2SeqModel<Scalar>& model, std::span<const Example> batch,
                         typename Seq2SeqModel<Scalar>::Vector& grads, std::uint64_t dropout_seed = 0,
                         bool training = false, BackwardFault fault = BackwardFault::none, int threads = 1);

template <typename Scalar>
BatchLoss train_step(Seq2SeqModel<Scalar>& model, std::span<const Example> batch, OptimizerState<Scalar>& state,
                     const AdamWConfig& config, double lr, std::uint64_t dropout_seed = 0, int threads = 1);

/// Teacher-forced loss, perplexity and token accuracy without dropout.
template <typename Scalar>
BatchLoss evaluate_loss(const Seq2SeqModel<Scalar>& model, std::span<const Example> dataset);

template <typename Scalar>
double perplexity(const Seq2SeqModel<Scalar>& model, std::span<const Example> dataset) {
  if (dataset.empty()) throw std::invalid_argument("perplexity needs a non-empty dataset");
  return evaluate_loss(model, dataset).perplexity();
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  std::string worst_parameter;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central finite differences on every parameter against the analytic gradient.
GradCheckResult grad_check(const Seq2SeqModel<double>& model, std::span<const Example> batch,
                           BackwardFault fault = BackwardFault::none, double h = 1e-5);

std::string parameter_name(const ParameterLayout& layout, Eigen::Index index);

struct TrainConfig {
  long steps = 20000;
  int batch_size = 32;
  AdamWConfig adamw;
  long warmup = 0;
  bool cosine = true;
  std::uint64_t seed = 0;
  int log_every = 100;
  int eval_every = 0;                             // 0 disables validation passes
  std::optional<double> stop_at_train_accuracy;   // early stop, checked every eval_every steps
  int threads = 1;
};

struct TrainEvent {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::optional<double> valid_perplexity;
  std::optional<double> train_accuracy;
};

struct TrainSummary {
  long steps = 0;
  double final_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> valid_perplexity;
  double wall_ms = 0.0;
};

using TrainCallback = std::function<void(const TrainEvent&)>;

/// Minibatch AdamW over shuffled epochs of `train`.
template <typename Scalar>
TrainSummary train_model(Seq2SeqModel<Scalar>& model, std::span<const Example> train, std::span<const Example> valid,
                         const TrainConfig& config, const TrainCallback& on_event = {},
                         OptimizerState<Scalar>* state = nullptr);

struct Checkpoint {
  Seq2SeqModel<float> model;
  std::uint64_t vocab_hash = 0;
  std::optional<OptimizerState<float>> optimizer;
  Json meta;
};

/// Container: magic line, one JSON header line, then raw little-endian float32
/// parameters (and optimizer moments when present).
void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel<float>& model, std::uint64_t vocab_hash,
                     const OptimizerState<float>* optimizer = nullptr, const Json& meta = Json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace plotcast::nn
