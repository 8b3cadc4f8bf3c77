#include "plotcast/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include "plotcast/random.hpp"
#include "plotcast/text.hpp"

namespace plotcast::nn {

Json config_to_json(const ModelConfig& c) {
  return Json{{"vocab_size", c.vocab_size},     {"d_model", c.d_model},         {"n_heads", c.n_heads},
              {"n_layers_enc", c.n_layers_enc}, {"n_layers_dec", c.n_layers_dec}, {"d_ff", c.d_ff},
              {"max_src_len", c.max_src_len},   {"max_tgt_len", c.max_tgt_len}, {"dropout", c.dropout},
              {"frame_dim", c.frame_dim},       {"use_frames", c.use_frames}};
}

ModelConfig config_from_json(const Json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers_enc = j.value("n_layers_enc", c.n_layers_enc);
  c.n_layers_dec = j.value("n_layers_dec", c.n_layers_dec);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_src_len = j.value("max_src_len", c.max_src_len);
  c.max_tgt_len = j.value("max_tgt_len", c.max_tgt_len);
  c.dropout = j.value("dropout", c.dropout);
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.use_frames = j.value("use_frames", c.use_frames);
  return c;
}

template <typename Scalar>
void adamw_update(typename Seq2SeqModel<Scalar>::Vector& params, const typename Seq2SeqModel<Scalar>::Vector& grads,
                  OptimizerState<Scalar>& state, const AdamWConfig& config, double lr) {
  if (state.m.size() != params.size()) {
    state.m = Seq2SeqModel<Scalar>::Vector::Zero(params.size());
    state.v = Seq2SeqModel<Scalar>::Vector::Zero(params.size());
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseProduct(grads);
  params *= static_cast<Scalar>(1.0 - lr * config.weight_decay);
  // With beta = 0 the bias corrections are 1 and this is sign-like SGD.
  const auto step_size = static_cast<Scalar>(lr / (c1 > 0 ? c1 : 1.0));
  const auto v_scale = static_cast<Scalar>(1.0 / (c2 > 0 ? c2 : 1.0));
  const auto eps = static_cast<Scalar>(config.eps);
  params.array() -= step_size * state.m.array() / ((state.v.array() * v_scale).sqrt() + eps);
}

double cosine_lr(double base_lr, long step, long total_steps, long warmup) {
  if (warmup > 0 && step < warmup) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return base_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return 0.5 * base_lr * (1.0 + std::cos(M_PI * std::clamp(progress, 0.0, 1.0)));
}

NonFiniteLoss::NonFiniteLoss(long step, std::uint64_t batch_hash)
    : std::runtime_error("non-finite loss at step " + std::to_string(step) + " (batch " + hex64(batch_hash) + ")"),
      step_(step),
      batch_hash_(batch_hash) {}

std::uint64_t batch_hash(std::span<const Example> batch) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& ex : batch) {
    h = fnv1a({reinterpret_cast<const char*>(ex.source.data()), ex.source.size() * sizeof(int)}, h);
    h = fnv1a({reinterpret_cast<const char*>(ex.target.data()), ex.target.size() * sizeof(int)}, h);
    h = fnv1a({reinterpret_cast<const char*>(ex.frame.data()), static_cast<std::size_t>(ex.frame.size()) * sizeof(double)}, h);
    h = fnv1a({reinterpret_cast<const char*>(ex.frame_forecast.data()),
               static_cast<std::size_t>(ex.frame_forecast.size()) * sizeof(double)},
              h);
  }
  return h;
}

double BatchLoss::perplexity() const { return std::exp(mean()); }

BatchLoss& BatchLoss::operator+=(const LossResult& r) {
  loss_sum += r.loss_sum;
  tokens += r.tokens;
  correct += r.correct;
  return *this;
}

namespace {

constexpr std::size_t kReductionChunks = 4;

long count_target_tokens(std::span<const Example> batch) {
  long n = 0;
  for (const auto& ex : batch) {
    std::size_t len = ex.target.size();
    while (len > 0 && ex.target[len - 1] == 0) --len;
    for (std::size_t i = 1; i < len; ++i) n += ex.target[i] != 0;
  }
  return n;
}

}  // namespace

template <typename Scalar>
BatchLoss batch_gradient(const Seq2SeqModel<Scalar>& model, std::span<const Example> batch,
                         typename Seq2SeqModel<Scalar>::Vector& grads, std::uint64_t dropout_seed, bool training,
                         BackwardFault fault, int threads) {
  using Vector = typename Seq2SeqModel<Scalar>::Vector;
  grads = Vector::Zero(model.params().size());
  const long tokens = count_target_tokens(batch);
  BatchLoss total;
  if (tokens == 0) return total;
  const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(tokens));

  const std::size_t chunks = std::min(kReductionChunks, batch.size());
  std::vector<Vector> partial(chunks, Vector::Zero(model.params().size()));
  std::vector<BatchLoss> losses(chunks);
  auto run_chunk = [&](std::size_t c) {
    for (std::size_t i = c; i < batch.size(); i += chunks) {
      losses[c] += example_loss(model, batch[i], &partial[c], scale, mix_seed(dropout_seed, i), training, fault);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, chunks);
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t c = 0; c < chunks; ++c) {
    grads += partial[c];
    total.loss_sum += losses[c].loss_sum;
    total.tokens += losses[c].tokens;
    total.correct += losses[c].correct;
  }
  return total;
}

template <typename Scalar>
BatchLoss train_step(Seq2SeqModel<Scalar>& model, std::span<const Example> batch, OptimizerState<Scalar>& state,
                     const AdamWConfig& config, double lr, std::uint64_t dropout_seed, int threads) {
  typename Seq2SeqModel<Scalar>::Vector grads;
  const BatchLoss loss =
      batch_gradient(model, batch, grads, dropout_seed, model.config().dropout > 0, BackwardFault::none, threads);
  if (!std::isfinite(loss.loss_sum) || !grads.allFinite()) throw NonFiniteLoss(state.step + 1, batch_hash(batch));
  adamw_update<Scalar>(model.params(), grads, state, config, lr);
  return loss;
}

template <typename Scalar>
BatchLoss evaluate_loss(const Seq2SeqModel<Scalar>& model, std::span<const Example> dataset) {
  BatchLoss total;
  for (const auto& ex : dataset) total += example_loss(model, ex);
  return total;
}

std::string parameter_name(const ParameterLayout& layout, Eigen::Index index) {
  for (const auto& [name, slot] : layout.named) {
    if (index >= slot.offset && index < slot.offset + slot.size()) {
      const Eigen::Index local = index - slot.offset;
      return name + "[" + std::to_string(local / slot.cols) + "," + std::to_string(local % slot.cols) + "]";
    }
  }
  return "?";
}

GradCheckResult grad_check(const Seq2SeqModel<double>& model, std::span<const Example> batch, BackwardFault fault,
                           double h) {
  Eigen::VectorXd analytic;
  batch_gradient(model, batch, analytic, 0, false, fault);

  Seq2SeqModel<double> probe = model;
  auto mean_loss = [&] {
    BatchLoss total;
    for (const auto& ex : batch) total += example_loss(probe, ex);
    return total.mean();
  };

  GradCheckResult result;
  for (Eigen::Index i = 0; i < probe.params().size(); ++i) {
    const double saved = probe.params()[i];
    probe.params()[i] = saved + h;
    const double up = mean_loss();
    probe.params()[i] = saved - h;
    const double down = mean_loss();
    probe.params()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - analytic[i]) / std::max(1e-8, std::abs(numeric) + std::abs(analytic[i]));
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  if (result.worst_index >= 0) result.worst_parameter = parameter_name(model.layout(), result.worst_index);
  return result;
}

template <typename Scalar>
TrainSummary train_model(Seq2SeqModel<Scalar>& model, std::span<const Example> train, std::span<const Example> valid,
                         const TrainConfig& config, const TrainCallback& on_event, OptimizerState<Scalar>* state) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (config.batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  OptimizerState<Scalar> local;
  OptimizerState<Scalar>& opt = state ? *state : local;

  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };

  Rng rng(mix_seed(config.seed, 0x7472616eULL));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<Example> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));

  TrainSummary summary;
  for (long step = 0; step < config.steps; ++step) {
    batch.clear();
    while (batch.size() < static_cast<std::size_t>(config.batch_size) && batch.size() < train.size()) {
      if (cursor == order.size()) {
        rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    const double lr = config.cosine ? cosine_lr(config.adamw.lr, step, config.steps, config.warmup) : config.adamw.lr;
    const BatchLoss loss =
        train_step(model, std::span<const Example>(batch), opt, config.adamw, lr, mix_seed(config.seed, step), config.threads);
    summary.steps = step + 1;
    summary.final_loss = loss.mean();

    const bool last = step + 1 == config.steps;
    const bool eval_now = config.eval_every > 0 && ((step + 1) % config.eval_every == 0 || last);
    TrainEvent event{step + 1, loss.mean(), lr, 0.0, std::nullopt, std::nullopt};
    if (eval_now) {
      if (!valid.empty()) event.valid_perplexity = perplexity(model, valid);
      if (config.stop_at_train_accuracy) event.train_accuracy = evaluate_loss(model, train).accuracy();
      summary.valid_perplexity = event.valid_perplexity;
      summary.train_accuracy = event.train_accuracy;
    }
    const bool log_now = (config.log_every > 0 && (step + 1) % config.log_every == 0) || last || eval_now;
    event.wall_ms = elapsed_ms();
    if (log_now && on_event) on_event(event);
    if (event.train_accuracy && config.stop_at_train_accuracy && *event.train_accuracy >= *config.stop_at_train_accuracy)
      break;
  }
  summary.wall_ms = elapsed_ms();
  return summary;
}

namespace {

constexpr char kCheckpointMagic[] = "PLOTCAST-CHECKPOINT 1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void write_floats(std::ofstream& out, const Eigen::VectorXf& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

Eigen::VectorXf read_floats(std::ifstream& in, Eigen::Index n, const std::filesystem::path& path) {
  Eigen::VectorXf v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel<float>& model, std::uint64_t vocab_hash,
                     const OptimizerState<float>* optimizer, const Json& meta) {
  const bool with_opt = optimizer && optimizer->m.size() == model.params().size();
  Json header{{"format", "plotcast-checkpoint"},
              {"version", 1},
              {"config", config_to_json(model.config())},
              {"vocab_hash", hex64(vocab_hash)},
              {"parameters", model.params().size()},
              {"optimizer", with_opt},
              {"optimizer_step", with_opt ? optimizer->step : 0},
              {"meta", meta}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << kCheckpointMagic << header.dump() << '\n';
    write_floats(out, model.params());
    if (with_opt) {
      write_floats(out, optimizer->m);
      write_floats(out, optimizer->v);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic + "\n" != kCheckpointMagic) throw std::runtime_error("not a plotcast checkpoint: " + path.string());
  std::getline(in, header_line);
  const Json header = Json::parse(header_line);
  if (header.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
  const ModelConfig config = config_from_json(header.at("config"));
  const auto n = header.at("parameters").get<Eigen::Index>();
  Checkpoint ck{Seq2SeqModel<float>(config, read_floats(in, n, path)),
                std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16), std::nullopt,
                header.value("meta", Json::object())};
  if (header.value("optimizer", false)) {
    OptimizerState<float> opt;
    opt.m = read_floats(in, n, path);
    opt.v = read_floats(in, n, path);
    opt.step = header.value("optimizer_step", 0L);
    ck.optimizer = std::move(opt);
  }
  return ck;
}

#define PLOTCAST_INSTANTIATE(S)                                                                                   \
  template void adamw_update<S>(Seq2SeqModel<S>::Vector&, const Seq2SeqModel<S>::Vector&, OptimizerState<S>&,    \
                                const AdamWConfig&, double);                                                     \
  template BatchLoss batch_gradient<S>(const Seq2SeqModel<S>&, std::span<const Example>, Seq2SeqModel<S>::Vector&, \
                                       std::uint64_t, bool, BackwardFault, int);                                 \
  template BatchLoss train_step<S>(Seq2SeqModel<S>&, std::span<const Example>, OptimizerState<S>&,                \
                                   const AdamWConfig&, double, std::uint64_t, int);                              \
  template BatchLoss evaluate_loss<S>(const Seq2SeqModel<S>&, std::span<const Example>);                         \
  template TrainSummary train_model<S>(Seq2SeqModel<S>&, std::span<const Example>, std::span<const Example>,       \
                                       const TrainConfig&, const TrainCallback&, OptimizerState<S>*);

PLOTCAST_INSTANTIATE(float)
PLOTCAST_INSTANTIATE(double)

#undef PLOTCAST_INSTANTIATE

}  // namespace plotcast::nn
