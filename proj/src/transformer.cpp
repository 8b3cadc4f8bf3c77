#include "plotcast/transformer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "plotcast/random.hpp"

namespace plotcast::nn {

namespace {

constexpr int kPadId = 0;
constexpr double kLayerNormEps = 1e-5;

enum class Init { normal, zero, one };

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 4) throw std::invalid_argument("vocab_size must exceed the four special tokens");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw std::invalid_argument("d_model must be a positive multiple of n_heads");
  if (n_layers_enc < 0 || n_layers_dec < 1) throw std::invalid_argument("invalid layer counts");
  if (d_ff <= 0) throw std::invalid_argument("d_ff must be positive");
  if (max_src_len < (use_frames ? 3 : 1) || max_tgt_len < 3) throw std::invalid_argument("sequence limits too small");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (use_frames && frame_dim <= 0) throw std::invalid_argument("frame_dim must be positive when frames are used");
}

ParameterLayout ParameterLayout::build(const ModelConfig& c) {
  ParameterLayout L;
  Eigen::Index offset = 0;
  auto add = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    Slot s{offset, rows, cols};
    offset += rows * cols;
    L.named.emplace_back(name, s);
    return s;
  };
  const Eigen::Index d = c.d_model;
  auto norm = [&](const std::string& p) { return LayerNormSlots{add(p + ".gain", 1, d), add(p + ".bias", 1, d)}; };
  auto attention = [&](const std::string& p) {
    AttentionSlots a;
    a.wq = add(p + ".wq", d, d);
    a.bq = add(p + ".bq", 1, d);
    a.wk = add(p + ".wk", d, d);
    a.wv = add(p + ".wv", d, d);
    a.bv = add(p + ".bv", 1, d);
    a.wo = add(p + ".wo", d, d);
    a.bo = add(p + ".bo", 1, d);
    return a;
  };
  auto feed_forward = [&](const std::string& p) {
    return FeedForwardSlots{add(p + ".w1", d, c.d_ff), add(p + ".b1", 1, c.d_ff), add(p + ".w2", c.d_ff, d),
                            add(p + ".b2", 1, d)};
  };

  L.tok_emb = add("tok_emb", c.vocab_size, d);
  L.enc_pos = add("enc_pos", c.max_src_len, d);
  L.dec_pos = add("dec_pos", c.max_tgt_len, d);
  if (c.use_frames) {
    L.frame_w = add("frame_w", c.frame_dim, d);
    L.frame_b = add("frame_b", 1, d);
  }
  L.out_bias = add("out_bias", 1, c.vocab_size);
  for (int i = 0; i < c.n_layers_enc; ++i) {
    const std::string p = "enc." + std::to_string(i);
    L.enc.push_back({norm(p + ".ln1"), attention(p + ".attn"), norm(p + ".ln2"), feed_forward(p + ".ffn")});
  }
  L.enc_norm = norm("enc.norm");
  for (int i = 0; i < c.n_layers_dec; ++i) {
    const std::string p = "dec." + std::to_string(i);
    DecoderLayerSlots layer;
    layer.ln1 = norm(p + ".ln1");
    layer.self_attn = attention(p + ".self");
    layer.ln2 = norm(p + ".ln2");
    layer.cross_attn = attention(p + ".cross");
    layer.ln3 = norm(p + ".ln3");
    layer.ffn = feed_forward(p + ".ffn");
    L.dec.push_back(layer);
  }
  L.dec_norm = norm("dec.norm");
  L.size = offset;
  return L;
}

namespace {

Init init_kind(const std::string& name) {
  if (name.ends_with(".gain")) return Init::one;
  if (name.ends_with(".bias") || name.ends_with("_b") || name.ends_with(".bq") ||
      name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") || name.ends_with(".b2") ||
      name == "out_bias")
    return Init::zero;
  return Init::normal;
}

}  // namespace

template <typename Scalar>
Seq2SeqModel<Scalar>::Seq2SeqModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), layout_(ParameterLayout::build(config)) {
  config_.validate();
  params_ = Vector::Zero(layout_.size);
  Rng rng(seed);
  for (const auto& [name, slot] : layout_.named) {
    auto v = view(slot);
    switch (init_kind(name)) {
      case Init::one: v.setOnes(); break;
      case Init::zero: v.setZero(); break;
      case Init::normal:
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>(0.02 * rng.normal());
        break;
    }
  }
}

template <typename Scalar>
Seq2SeqModel<Scalar>::Seq2SeqModel(const ModelConfig& config, Vector params)
    : config_(config), layout_(ParameterLayout::build(config)), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != layout_.size) throw std::invalid_argument("parameter vector does not match model layout");
}

namespace {

template <typename S>
using Mat = typename Seq2SeqModel<S>::Matrix;
template <typename S>
using Vec = typename Seq2SeqModel<S>::Vector;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
struct GradSink {
  Vec<S>* grads = nullptr;
  BackwardFault fault = BackwardFault::none;

  Eigen::Map<Mat<S>> operator()(const Slot& s) const {
    return Eigen::Map<Mat<S>>(grads->data() + s.offset, s.rows, s.cols);
  }
};

// ---- layer norm ----

template <typename S>
struct NormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

template <typename S>
Mat<S> norm_forward(const Seq2SeqModel<S>& m, const LayerNormSlots& s, const Mat<S>& x, NormCache<S>* cache) {
  const auto gain = m.view(s.gain).row(0);
  const auto bias = m.view(s.bias).row(0);
  Mat<S> xhat(x.rows(), x.cols());
  Vec<S> rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).mean();
    const RowVec<S> centered = x.row(r).array() - mean;
    const S var = centered.squaredNorm() / static_cast<S>(x.cols());
    rstd[r] = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    xhat.row(r) = centered * rstd[r];
  }
  Mat<S> y = xhat.array().rowwise() * gain.array();
  y.rowwise() += bias;
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename S>
Mat<S> norm_backward(const Seq2SeqModel<S>& m, const LayerNormSlots& s, const NormCache<S>& c, const Mat<S>& dy,
                     const GradSink<S>& g) {
  const auto gain = m.view(s.gain).row(0);
  g(s.gain).row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g(s.bias).row(0) += dy.colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * gain.array();
  Mat<S> dx(dy.rows(), dy.cols());
  const S inv_n = S(1) / static_cast<S>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    if (g.fault == BackwardFault::layer_norm) {
      dx.row(r) = dxhat.row(r) * c.rstd[r];
      continue;
    }
    const S mean_d = dxhat.row(r).sum() * inv_n;
    const S mean_dx = dxhat.row(r).dot(c.xhat.row(r)) * inv_n;
    dx.row(r) = (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx) * c.rstd[r];
  }
  return dx;
}

// ---- attention ----

template <typename S>
struct AttentionCache {
  Mat<S> q_in, kv_in, q, k, v, o;
  std::vector<Mat<S>> probs;
  bool self = false;
};

template <typename S>
void masked_softmax_rows(Mat<S>& scores, const std::vector<bool>& key_mask, bool causal, Eigen::Index query_offset) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    S max_v = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const bool allowed = key_mask[static_cast<std::size_t>(j)] && (!causal || j <= i + query_offset);
      if (allowed) max_v = std::max(max_v, scores(i, j));
    }
    S sum = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const bool allowed = key_mask[static_cast<std::size_t>(j)] && (!causal || j <= i + query_offset);
      const S e = allowed ? std::exp(scores(i, j) - max_v) : S(0);
      scores(i, j) = e;
      sum += e;
    }
    if (sum > 0) scores.row(i) /= sum;
  }
}

template <typename S>
Mat<S> attention_forward(const Seq2SeqModel<S>& m, const AttentionSlots& s, const Mat<S>& q_in, const Mat<S>& kv_in,
                         const std::vector<bool>& key_mask, bool causal, bool self, AttentionCache<S>* cache) {
  const int heads = m.config().n_heads;
  const Eigen::Index dh = m.config().d_model / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> q = q_in * m.view(s.wq);
  q.rowwise() += m.view(s.bq).row(0);
  Mat<S> k = kv_in * m.view(s.wk);
  Mat<S> v = kv_in * m.view(s.wv);
  v.rowwise() += m.view(s.bv).row(0);

  Mat<S> o(q.rows(), q.cols());
  std::vector<Mat<S>> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat<S> p = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    masked_softmax_rows<S>(p, key_mask, causal, 0);
    o.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Mat<S> out = o * m.view(s.wo);
  out.rowwise() += m.view(s.bo).row(0);

  if (cache) {
    cache->q_in = q_in;
    if (!self) cache->kv_in = kv_in;
    cache->self = self;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->probs = std::move(probs);
  }
  return out;
}

/// Returns gradients w.r.t. the query input and key/value input. For
/// self-attention both are w.r.t. the same tensor and the caller sums them.
template <typename S>
std::pair<Mat<S>, Mat<S>> attention_backward(const Seq2SeqModel<S>& m, const AttentionSlots& s,
                                             const AttentionCache<S>& c, const Mat<S>& dout, const GradSink<S>& g,
                                             bool corrupt_softmax) {
  const int heads = m.config().n_heads;
  const Eigen::Index dh = m.config().d_model / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const Mat<S>& kv_in = c.self ? c.q_in : c.kv_in;

  g(s.wo) += c.o.transpose() * dout;
  g(s.bo).row(0) += dout.colwise().sum();
  const Mat<S> d_o = dout * m.view(s.wo).transpose();

  Mat<S> dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Mat<S>& p = c.probs[static_cast<std::size_t>(h)];
    const Mat<S> d_oh = d_o.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
    const Mat<S> dp = d_oh * c.v.middleCols(h * dh, dh).transpose();
    Mat<S> ds;
    if (corrupt_softmax) {
      ds = (p.array() * dp.array()).matrix() * scale;
    } else {
      const Vec<S> row_dot = (dp.array() * p.array()).rowwise().sum();
      ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
    }
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }

  g(s.wq) += c.q_in.transpose() * dq;
  g(s.bq).row(0) += dq.colwise().sum();
  g(s.wk) += kv_in.transpose() * dk;
  g(s.wv) += kv_in.transpose() * dv;
  g(s.bv).row(0) += dv.colwise().sum();

  Mat<S> d_q_in = dq * m.view(s.wq).transpose();
  Mat<S> d_kv_in = dk * m.view(s.wk).transpose() + dv * m.view(s.wv).transpose();
  return {std::move(d_q_in), std::move(d_kv_in)};
}

// ---- feed-forward (GELU, tanh approximation) ----

template <typename S>
struct FeedForwardCache {
  Mat<S> x, pre, act;
};

template <typename S>
S gelu(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  return S(0.5) * x * (S(1) + std::tanh(c * (x + static_cast<S>(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  const S a = static_cast<S>(0.044715);
  const S t = std::tanh(c * (x + a * x * x * x));
  return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * c * (S(1) + S(3) * a * x * x);
}

template <typename S>
Mat<S> feed_forward(const Seq2SeqModel<S>& m, const FeedForwardSlots& s, const Mat<S>& x, FeedForwardCache<S>* cache) {
  Mat<S> pre = x * m.view(s.w1);
  pre.rowwise() += m.view(s.b1).row(0);
  Mat<S> act = pre.unaryExpr([](S v) { return gelu(v); });
  Mat<S> out = act * m.view(s.w2);
  out.rowwise() += m.view(s.b2).row(0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <typename S>
Mat<S> feed_forward_backward(const Seq2SeqModel<S>& m, const FeedForwardSlots& s, const FeedForwardCache<S>& c,
                             const Mat<S>& dout, const GradSink<S>& g) {
  g(s.w2) += c.act.transpose() * dout;
  g(s.b2).row(0) += dout.colwise().sum();
  const Mat<S> d_act = dout * m.view(s.w2).transpose();
  Mat<S> d_pre;
  if (g.fault == BackwardFault::feed_forward) {
    d_pre = d_act;
  } else {
    d_pre = (d_act.array() * c.pre.unaryExpr([](S v) { return gelu_grad(v); }).array()).matrix();
  }
  g(s.w1) += c.x.transpose() * d_pre;
  g(s.b1).row(0) += d_pre.colwise().sum();
  return d_pre * m.view(s.w1).transpose();
}

// ---- dropout ----

template <typename S>
struct Dropout {
  double p = 0.0;
  Rng* rng = nullptr;

  bool active() const { return p > 0.0 && rng != nullptr; }

  Mat<S> mask(Eigen::Index rows, Eigen::Index cols) const {
    Mat<S> m(rows, cols);
    const S keep = static_cast<S>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < p ? S(0) : keep;
    return m;
  }

  // Applies dropout in place, remembering the mask when one was drawn.
  void apply(Mat<S>& x, Mat<S>& saved) const {
    if (!active()) return;
    saved = mask(x.rows(), x.cols());
    x.array() *= saved.array();
  }
};

template <typename S>
Mat<S> undo_mask(const Mat<S>& d, const Mat<S>& mask) {
  if (mask.size() == 0) return d;
  return (d.array() * mask.array()).matrix();
}

// ---- encoder ----

template <typename S>
struct EncoderPass {
  struct Layer {
    NormCache<S> ln1, ln2;
    AttentionCache<S> attn;
    FeedForwardCache<S> ffn;
    Mat<S> attn_mask, ffn_mask;
  };

  const Seq2SeqModel<S>& m;
  std::span<const int> source;
  const Eigen::VectorXd& frame;
  const Eigen::VectorXd& forecast;
  Dropout<S> dropout;

  Mat<S> emb_mask;
  std::vector<Layer> layers;
  NormCache<S> final_norm;
  std::vector<bool> key_mask;

  Mat<S> forward(bool keep_cache) {
    const auto& cfg = m.config();
    Mat<S> h = encoder_input(m, source, frame, forecast);
    key_mask.assign(static_cast<std::size_t>(h.rows()), true);
    for (std::size_t i = 0; i < source.size(); ++i) key_mask[i] = source[i] != kPadId;
    dropout.apply(h, emb_mask);

    layers.assign(keep_cache ? m.layout().enc.size() : 0, {});
    for (std::size_t l = 0; l < m.layout().enc.size(); ++l) {
      const auto& s = m.layout().enc[l];
      Layer* c = keep_cache ? &layers[l] : nullptr;
      Mat<S> a = norm_forward(m, s.ln1, h, c ? &c->ln1 : nullptr);
      Mat<S> att = attention_forward(m, s.attn, a, a, key_mask, false, true, c ? &c->attn : nullptr);
      Mat<S> scratch;
      dropout.apply(att, c ? c->attn_mask : scratch);
      h += att;
      Mat<S> f = norm_forward(m, s.ln2, h, c ? &c->ln2 : nullptr);
      Mat<S> ff = feed_forward(m, s.ffn, f, c ? &c->ffn : nullptr);
      dropout.apply(ff, c ? c->ffn_mask : scratch);
      h += ff;
    }
    (void)cfg;
    return norm_forward(m, m.layout().enc_norm, h, keep_cache ? &final_norm : nullptr);
  }

  void backward(const Mat<S>& d_out, const GradSink<S>& g) {
    const auto& L = m.layout();
    Mat<S> dh = norm_backward(m, L.enc_norm, final_norm, d_out, g);
    for (std::size_t l = L.enc.size(); l-- > 0;) {
      const auto& s = L.enc[l];
      const Layer& c = layers[l];
      const Mat<S> d_ff = undo_mask<S>(dh, c.ffn_mask);
      dh += norm_backward(m, s.ln2, c.ln2, feed_forward_backward(m, s.ffn, c.ffn, d_ff, g), g);
      const Mat<S> d_att = undo_mask<S>(dh, c.attn_mask);
      auto [dq, dkv] = attention_backward(m, s.attn, c.attn, d_att, g, g.fault == BackwardFault::encoder_attention);
      dh += norm_backward(m, s.ln1, c.ln1, Mat<S>(dq + dkv), g);
    }
    const Mat<S> dx = undo_mask<S>(dh, emb_mask);

    const auto n = static_cast<Eigen::Index>(source.size());
    auto d_emb = g(L.tok_emb);
    auto d_pos = g(L.enc_pos);
    d_pos.topRows(dx.rows()) += dx;
    if (g.fault != BackwardFault::embedding)
      for (Eigen::Index i = 0; i < n; ++i) d_emb.row(source[static_cast<std::size_t>(i)]) += dx.row(i);
    if (m.config().use_frames && g.fault != BackwardFault::frame_projection) {
      const Eigen::Matrix<S, 1, Eigen::Dynamic> f0 = frame.transpose().cast<S>();
      const Eigen::Matrix<S, 1, Eigen::Dynamic> f1 = forecast.transpose().cast<S>();
      g(L.frame_w) += f0.transpose() * dx.row(n) + f1.transpose() * dx.row(n + 1);
      g(L.frame_b).row(0) += dx.row(n) + dx.row(n + 1);
    }
  }
};

// ---- decoder ----

template <typename S>
struct DecoderPass {
  struct Layer {
    NormCache<S> ln1, ln2, ln3;
    AttentionCache<S> self_attn, cross_attn;
    FeedForwardCache<S> ffn;
    Mat<S> self_mask, cross_mask, ffn_mask;
  };

  const Seq2SeqModel<S>& m;
  std::span<const int> input;
  const Mat<S>& memory;
  const std::vector<bool>& memory_mask;
  Dropout<S> dropout;

  Mat<S> emb_mask;
  std::vector<Layer> layers;
  NormCache<S> final_norm;
  Mat<S> hidden;  // final normalized states, needed for the tied projection

  Mat<S> forward(bool keep_cache) {
    const auto& L = m.layout();
    const auto T = static_cast<Eigen::Index>(input.size());
    if (T > m.config().max_tgt_len) throw std::invalid_argument("decoder input longer than max_tgt_len");
    const auto emb = m.view(L.tok_emb);
    const auto pos = m.view(L.dec_pos);
    Mat<S> g(T, m.config().d_model);
    std::vector<bool> self_mask(static_cast<std::size_t>(T));
    for (Eigen::Index j = 0; j < T; ++j) {
      const int tok = input[static_cast<std::size_t>(j)];
      if (tok < 0 || tok >= m.config().vocab_size) throw std::invalid_argument("decoder token id out of range");
      g.row(j) = emb.row(tok) + pos.row(j);
      self_mask[static_cast<std::size_t>(j)] = tok != kPadId;
    }
    dropout.apply(g, emb_mask);

    layers.assign(keep_cache ? L.dec.size() : 0, {});
    Mat<S> scratch;
    for (std::size_t l = 0; l < L.dec.size(); ++l) {
      const auto& s = L.dec[l];
      Layer* c = keep_cache ? &layers[l] : nullptr;
      Mat<S> a = norm_forward(m, s.ln1, g, c ? &c->ln1 : nullptr);
      Mat<S> sa = attention_forward(m, s.self_attn, a, a, self_mask, true, true, c ? &c->self_attn : nullptr);
      dropout.apply(sa, c ? c->self_mask : scratch);
      g += sa;
      Mat<S> q = norm_forward(m, s.ln2, g, c ? &c->ln2 : nullptr);
      Mat<S> ca = attention_forward(m, s.cross_attn, q, memory, memory_mask, false, false, c ? &c->cross_attn : nullptr);
      dropout.apply(ca, c ? c->cross_mask : scratch);
      g += ca;
      Mat<S> f = norm_forward(m, s.ln3, g, c ? &c->ln3 : nullptr);
      Mat<S> ff = feed_forward(m, s.ffn, f, c ? &c->ffn : nullptr);
      dropout.apply(ff, c ? c->ffn_mask : scratch);
      g += ff;
    }
    hidden = norm_forward(m, L.dec_norm, g, keep_cache ? &final_norm : nullptr);
    Mat<S> logits = hidden * emb.transpose();
    logits.rowwise() += m.view(L.out_bias).row(0);
    return logits;
  }

  /// Returns the gradient w.r.t. the encoder memory.
  Mat<S> backward(const Mat<S>& d_logits, const GradSink<S>& g) {
    const auto& L = m.layout();
    const auto emb = m.view(L.tok_emb);
    if (g.fault != BackwardFault::output_projection) g(L.tok_emb) += d_logits.transpose() * hidden;
    g(L.out_bias).row(0) += d_logits.colwise().sum();
    Mat<S> dg = norm_backward(m, L.dec_norm, final_norm, Mat<S>(d_logits * emb), g);

    Mat<S> d_memory = Mat<S>::Zero(memory.rows(), memory.cols());
    for (std::size_t l = L.dec.size(); l-- > 0;) {
      const auto& s = L.dec[l];
      const Layer& c = layers[l];
      dg += norm_backward(m, s.ln3, c.ln3, feed_forward_backward(m, s.ffn, c.ffn, undo_mask<S>(dg, c.ffn_mask), g), g);

      auto [dq, dmem] = attention_backward(m, s.cross_attn, c.cross_attn, undo_mask<S>(dg, c.cross_mask), g, false);
      if (g.fault != BackwardFault::cross_attention) d_memory += dmem;
      dg += norm_backward(m, s.ln2, c.ln2, dq, g);

      auto [dsq, dskv] = attention_backward(m, s.self_attn, c.self_attn, undo_mask<S>(dg, c.self_mask), g,
                                            g.fault == BackwardFault::self_attention);
      dg += norm_backward(m, s.ln1, c.ln1, Mat<S>(dsq + dskv), g);
    }
    const Mat<S> dx = undo_mask<S>(dg, emb_mask);
    auto d_emb = g(L.tok_emb);
    g(L.dec_pos).topRows(dx.rows()) += dx;
    for (Eigen::Index j = 0; j < dx.rows(); ++j) d_emb.row(input[static_cast<std::size_t>(j)]) += dx.row(j);
    return d_memory;
  }
};

}  // namespace

template <typename Scalar>
typename Seq2SeqModel<Scalar>::Matrix encoder_input(const Seq2SeqModel<Scalar>& model, std::span<const int> source,
                                                    const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast) {
  const auto& cfg = model.config();
  const auto& L = model.layout();
  const auto n = static_cast<Eigen::Index>(source.size());
  const Eigen::Index total = n + (cfg.use_frames ? 2 : 0);
  if (total == 0) throw std::invalid_argument("empty encoder input");
  if (total > cfg.max_src_len) throw std::invalid_argument("encoder input longer than max_src_len");
  if (cfg.use_frames && (frame.size() != cfg.frame_dim || forecast.size() != cfg.frame_dim))
    throw std::invalid_argument("frame vector dimension " + std::to_string(frame.size()) + "/" +
                                std::to_string(forecast.size()) + " does not match model frame_dim " +
                                std::to_string(cfg.frame_dim));

  const auto emb = model.view(L.tok_emb);
  const auto pos = model.view(L.enc_pos);
  Mat<Scalar> x(total, cfg.d_model);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int tok = source[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= cfg.vocab_size) throw std::invalid_argument("source token id out of range");
    x.row(i) = emb.row(tok);
  }
  if (cfg.use_frames) {
    const auto w = model.view(L.frame_w);
    const auto b = model.view(L.frame_b).row(0);
    x.row(n) = frame.transpose().cast<Scalar>() * w + b;
    x.row(n + 1) = forecast.transpose().cast<Scalar>() * w + b;
  }
  x += pos.topRows(total);
  return x;
}

template <typename Scalar>
EncoderOutput<Scalar> encode(const Seq2SeqModel<Scalar>& model, std::span<const int> source,
                             const Eigen::VectorXd& frame, const Eigen::VectorXd& forecast) {
  EncoderPass<Scalar> pass{model, source, frame, forecast, {}, {}, {}, {}, {}};
  EncoderOutput<Scalar> out;
  out.states = pass.forward(false);
  out.key_mask = pass.key_mask;
  return out;
}

template <typename Scalar>
typename Seq2SeqModel<Scalar>::Matrix decoder_logits(const Seq2SeqModel<Scalar>& model,
                                                     const EncoderOutput<Scalar>& memory,
                                                     std::span<const int> decoder_input) {
  DecoderPass<Scalar> pass{model, decoder_input, memory.states, memory.key_mask, {}, {}, {}, {}, {}};
  return pass.forward(false);
}

template <typename Scalar>
LossResult example_loss(const Seq2SeqModel<Scalar>& model, const Example& example,
                        typename Seq2SeqModel<Scalar>::Vector* grads, Scalar grad_scale, std::uint64_t dropout_seed,
                        bool training, BackwardFault fault) {
  std::size_t len = example.target.size();
  while (len > 0 && example.target[len - 1] == kPadId) --len;  // causal mask makes trailing PAD inert
  LossResult result;
  if (len < 2) return result;
  const std::span<const int> target(example.target.data(), len);
  const auto dec_in = target.first(len - 1);
  const auto labels = target.subspan(1);

  Rng rng(dropout_seed);
  Dropout<Scalar> dropout{training ? model.config().dropout : 0.0, training ? &rng : nullptr};
  const bool backward = grads != nullptr;

  EncoderPass<Scalar> enc{model, example.source, example.frame, example.frame_forecast, dropout, {}, {}, {}, {}};
  const Mat<Scalar> memory = enc.forward(backward);
  DecoderPass<Scalar> dec{model, dec_in, memory, enc.key_mask, dropout, {}, {}, {}, {}};
  Mat<Scalar> logits = dec.forward(backward);

  // Softmax in place; logits becomes the probability matrix.
  Mat<Scalar> d_logits;
  if (backward) d_logits = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.rows(); ++j) {
    const int label = labels[static_cast<std::size_t>(j)];
    if (label == kPadId) continue;
    Eigen::Index arg;
    const Scalar max_v = logits.row(j).maxCoeff(&arg);
    const Scalar log_z = max_v + std::log((logits.row(j).array() - max_v).exp().sum());
    result.loss_sum += static_cast<double>(log_z - logits(j, label));
    result.tokens += 1;
    if (arg == label) result.correct += 1;
    if (backward) {
      d_logits.row(j) = (logits.row(j).array() - log_z).exp() * grad_scale;
      d_logits(j, label) -= grad_scale;
    }
  }
  if (backward) {
    GradSink<Scalar> sink{grads, fault};
    const Mat<Scalar> d_memory = dec.backward(d_logits, sink);
    enc.backward(d_memory, sink);
  }
  return result;
}

template <typename Scalar>
IncrementalDecoder<Scalar>::IncrementalDecoder(const Seq2SeqModel<Scalar>& model, EncoderOutput<Scalar> memory)
    : model_(model), memory_(std::move(memory)) {
  const auto& L = model_.layout();
  for (const auto& s : L.dec) {
    Matrix k = memory_.states * model_.view(s.cross_attn.wk);
    Matrix v = memory_.states * model_.view(s.cross_attn.wv);
    v.rowwise() += model_.view(s.cross_attn.bv).row(0);
    cross_keys_.push_back(std::move(k));
    cross_values_.push_back(std::move(v));
    self_keys_.emplace_back(0, model_.config().d_model);
    self_values_.emplace_back(0, model_.config().d_model);
  }
}

namespace {

template <typename S>
RowVec<S> attend_row(const RowVec<S>& q, const Mat<S>& keys, const Mat<S>& values, const std::vector<bool>* key_mask,
                     int heads) {
  const Eigen::Index dh = q.size() / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  RowVec<S> out(q.size());
  for (int h = 0; h < heads; ++h) {
    RowVec<S> scores = (q.segment(h * dh, dh) * keys.middleCols(h * dh, dh).transpose()) * scale;
    S max_v = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < scores.size(); ++j)
      if (!key_mask || (*key_mask)[static_cast<std::size_t>(j)]) max_v = std::max(max_v, scores[j]);
    S sum = 0;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      const bool allowed = !key_mask || (*key_mask)[static_cast<std::size_t>(j)];
      scores[j] = allowed ? std::exp(scores[j] - max_v) : S(0);
      sum += scores[j];
    }
    if (sum > 0) scores /= sum;
    out.segment(h * dh, dh) = scores * values.middleCols(h * dh, dh);
  }
  return out;
}

template <typename S>
void append_row(Mat<S>& m, const RowVec<S>& row) {
  m.conservativeResize(m.rows() + 1, Eigen::NoChange);
  m.row(m.rows() - 1) = row;
}

}  // namespace

template <typename Scalar>
typename IncrementalDecoder<Scalar>::RowVector IncrementalDecoder<Scalar>::step(int token) {
  const auto& cfg = model_.config();
  const auto& L = model_.layout();
  if (position_ >= cfg.max_tgt_len) throw std::out_of_range("decoder position exceeds max_tgt_len");
  if (token < 0 || token >= cfg.vocab_size) throw std::invalid_argument("decoder token id out of range");
  const auto emb = model_.view(L.tok_emb);
  Matrix x = emb.row(token) + model_.view(L.dec_pos).row(position_);

  for (std::size_t l = 0; l < L.dec.size(); ++l) {
    const auto& s = L.dec[l];
    Matrix a = norm_forward<Scalar>(model_, s.ln1, x, nullptr);
    RowVector q = a * model_.view(s.self_attn.wq) + model_.view(s.self_attn.bq);
    RowVector k = a * model_.view(s.self_attn.wk);
    RowVector v = a * model_.view(s.self_attn.wv) + model_.view(s.self_attn.bv);
    // PAD inputs are never fed during generation, so every cached key is visible.
    append_row<Scalar>(self_keys_[l], k);
    append_row<Scalar>(self_values_[l], v);
    RowVector o = attend_row<Scalar>(q, self_keys_[l], self_values_[l], nullptr, cfg.n_heads);
    x += o * model_.view(s.self_attn.wo) + model_.view(s.self_attn.bo);

    Matrix c = norm_forward<Scalar>(model_, s.ln2, x, nullptr);
    RowVector cq = c * model_.view(s.cross_attn.wq) + model_.view(s.cross_attn.bq);
    RowVector co = attend_row<Scalar>(cq, cross_keys_[l], cross_values_[l], &memory_.key_mask, cfg.n_heads);
    x += co * model_.view(s.cross_attn.wo) + model_.view(s.cross_attn.bo);

    Matrix f = norm_forward<Scalar>(model_, s.ln3, x, nullptr);
    x += feed_forward<Scalar>(model_, s.ffn, f, nullptr);
  }
  const Matrix h = norm_forward<Scalar>(model_, L.dec_norm, x, nullptr);
  ++position_;
  return h * emb.transpose() + model_.view(L.out_bias);
}

template class Seq2SeqModel<float>;
template class Seq2SeqModel<double>;
template class IncrementalDecoder<float>;
template class IncrementalDecoder<double>;

#define PLOTCAST_INSTANTIATE(S)                                                                                      \
  template Seq2SeqModel<S>::Matrix encoder_input<S>(const Seq2SeqModel<S>&, std::span<const int>,                  \
                                                    const Eigen::VectorXd&, const Eigen::VectorXd&);                \
  template EncoderOutput<S> encode<S>(const Seq2SeqModel<S>&, std::span<const int>, const Eigen::VectorXd&,         \
                                      const Eigen::VectorXd&);                                                      \
  template Seq2SeqModel<S>::Matrix decoder_logits<S>(const Seq2SeqModel<S>&, const EncoderOutput<S>&,              \
                                                     std::span<const int>);                                         \
  template LossResult example_loss<S>(const Seq2SeqModel<S>&, const Example&, Seq2SeqModel<S>::Vector*, S,          \
                                      std::uint64_t, bool, BackwardFault);

PLOTCAST_INSTANTIATE(float)
PLOTCAST_INSTANTIATE(double)

#undef PLOTCAST_INSTANTIATE

}  // namespace plotcast::nn
