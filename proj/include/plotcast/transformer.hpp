#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace plotcast::nn {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_heads = 4;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int d_ff = 256;
  int max_src_len = 96;  // includes the two frame positions when use_frames
  int max_tgt_len = 96;  // includes START and END
  double dropout = 0.0;
  int frame_dim = 0;
  bool use_frames = true;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A parameter tensor's location inside the flat parameter vector (row-major).
struct Slot {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

struct LayerNormSlots {
  Slot gain, bias;
};
struct AttentionSlots {
  Slot wq, bq, wk, wv, bv, wo, bo;  // no key bias: softmax is invariant to it
};
struct FeedForwardSlots {
  Slot w1, b1, w2, b2;
};
struct EncoderLayerSlots {
  LayerNormSlots ln1;
  AttentionSlots attn;
  LayerNormSlots ln2;
  FeedForwardSlots ffn;
};
struct DecoderLayerSlots {
  LayerNormSlots ln1;
  AttentionSlots self_attn;
  LayerNormSlots ln2;
  AttentionSlots cross_attn;
  LayerNormSlots ln3;
  FeedForwardSlots ffn;
};

struct ParameterLayout {
  Slot tok_emb;  // vocab x d_model, tied with the output projection
  Slot enc_pos, dec_pos;
  Slot frame_w, frame_b;  // frame_dim x d_model, shared by both frame inputs
  Slot out_bias;
  std::vector<EncoderLayerSlots> enc;
  LayerNormSlots enc_norm;
  std::vector<DecoderLayerSlots> dec;
  LayerNormSlots dec_norm;
  std::vector<std::pair<std::string, Slot>> named;
  Eigen::Index size = 0;

  static ParameterLayout build(const ModelConfig& config);
};

/// One training or inference example. `target` is framed as
/// [START, y1..ym, END] and may carry trailing PAD.
struct Example {
  std::vector<int> source;
  Eigen::VectorXd frame;           // f_n
  Eigen::VectorXd frame_forecast;  // f-hat_{n+1}
  std::vector<int> target;
};

/// Backward-pass sabotage used only by gradient-check mutation tests.
enum class BackwardFault {
  none,
  cross_attention,
  self_attention,
  encoder_attention,
  feed_forward,
  layer_norm,
  frame_projection,
  embedding,
  output_projection,
};

template <typename Scalar>
class Seq2SeqModel {
public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Seq2SeqModel() = default;
  /// Weights ~ N(0, 0.02), layer-norm gains 1, biases 0.
  Seq2SeqModel(const ModelConfig& config, std::uint64_t seed);
  Seq2SeqModel(const ModelConfig& config, Vector params);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  MatrixMap view(const Slot& s) { return MatrixMap(params_.data() + s.offset, s.rows, s.cols); }
  ConstMatrixMap view(const Slot& s) const { return ConstMatrixMap(params_.data() + s.offset, s.rows, s.cols); }

  template <typename Other>
  Seq2SeqModel<Other> cast() const {
    return Seq2SeqModel<Other>(config_, params_.template cast<Other>());
  }

private:
  ModelConfig config_;
  ParameterLayout layout_;
  Vector params_;
};

/// Encoder output for one source: token positions, then W_f f_n and W_f f-hat
/// as two extra positions when the model uses frames.
template <typename Scalar>
struct EncoderOutput {
  typename Seq2SeqModel<Scalar>::Matrix states;
  std::vector<bool> key_mask;  // false for PAD sources
};

/// Token and positional embeddings for the encoder input, before any layer.
template <typename Scalar>
typename Seq2SeqModel<Scalar>::Matrix encoder_input(const Seq2SeqModel<Scalar>& model, std::span<const int> source,
                                                    const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast);

template <typename Scalar>
EncoderOutput<Scalar> encode(const Seq2SeqModel<Scalar>& model, std::span<const int> source,
                             const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast);

/// Teacher-forced decoder logits for every decoder input position (no dropout).
template <typename Scalar>
typename Seq2SeqModel<Scalar>::Matrix decoder_logits(const Seq2SeqModel<Scalar>& model,
                                                     const EncoderOutput<Scalar>& memory,
                                                     std::span<const int> decoder_input);

struct LossResult {
  double loss_sum = 0.0;  // summed token cross-entropy
  long tokens = 0;        // non-PAD target positions
  long correct = 0;       // argmax hits, teacher-forced
};

/// Forward (and optionally backward) over one example. Gradients are
/// accumulated into `grads` (same layout as the parameters) scaled by
/// `grad_scale`, which is normally 1 / total tokens in the batch.
template <typename Scalar>
LossResult example_loss(const Seq2SeqModel<Scalar>& model, const Example& example,
                        typename Seq2SeqModel<Scalar>::Vector* grads = nullptr, Scalar grad_scale = Scalar(1),
                        std::uint64_t dropout_seed = 0, bool training = false,
                        BackwardFault fault = BackwardFault::none);

/// Key/value cache over the decoder for step-by-step generation.
template <typename Scalar>
class IncrementalDecoder {
public:
  using Matrix = typename Seq2SeqModel<Scalar>::Matrix;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  IncrementalDecoder(const Seq2SeqModel<Scalar>& model, EncoderOutput<Scalar> memory);

  /// Feeds the next decoder input token and returns logits for the following position.
  RowVector step(int token);
  int length() const { return position_; }

private:
  const Seq2SeqModel<Scalar>& model_;
  EncoderOutput<Scalar> memory_;
  std::vector<Matrix> self_keys_, self_values_;
  std::vector<Matrix> cross_keys_, cross_values_;
  int position_ = 0;
};

extern template class Seq2SeqModel<float>;
extern template class Seq2SeqModel<double>;
extern template class IncrementalDecoder<float>;
extern template class IncrementalDecoder<double>;

}  // namespace plotcast::nn
