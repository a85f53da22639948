#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "als/model/params.hpp"

namespace als::model {

// Pre-norm encoder-decoder transformer with GELU feed-forward blocks and
// fixed sinusoidal positions. Every forward keeps what its backward needs;
// gradients are accumulated into a ModelParams-shaped buffer.

namespace detail {

inline constexpr double kNormEps = 1e-5;

inline RowVec sinusoid(std::size_t pos, unsigned d) {
  RowVec r(d);
  for (unsigned i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
    r(i) = std::sin(static_cast<double>(pos) * freq);
    if (i + 1 < d) r(i + 1) = std::cos(static_cast<double>(pos) * freq);
  }
  return r;
}

inline Mat embed(const ModelParams& p, const std::vector<std::uint32_t>& ids) {
  const auto E = p.mat(p.layout().embedding);
  const unsigned d = p.config().d_model;
  Mat x(static_cast<long>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) x.row(static_cast<long>(i)) = E.row(ids[i]) + sinusoid(i, d);
  return x;
}

struct NormCache {
  Mat xhat;
  Vec rstd;
};

inline Mat layer_norm(const ModelParams& p, const NormSlots& s, const Mat& x, NormCache* c) {
  const long n = x.cols();
  Mat xhat(x.rows(), n);
  Vec rstd(x.rows());
  for (long i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kNormEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  const auto g = p.mat(s.g);
  const auto b = p.mat(s.b);
  Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (c) *c = {std::move(xhat), std::move(rstd)};
  return y;
}

inline Mat layer_norm_backward(const ModelParams& p, ModelParams& grad, const NormSlots& s, const NormCache& c,
                               const Mat& dy) {
  grad.mat(s.g).row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  grad.mat(s.b).row(0) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * p.mat(s.g).row(0).array();
  Mat dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  for (long i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).sum() / n;
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / n;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + 0.044715 * x * x * x)));
}
inline double gelu_grad(double x) {
  const double t = std::tanh(kGeluK * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3 * 0.044715 * x * x);
}

struct FfCache {
  Mat in, pre;
};

inline Mat feed_forward(const ModelParams& p, const FfSlots& s, const Mat& x, FfCache* c) {
  Mat pre = x * p.mat(s.w1);
  pre.rowwise() += p.mat(s.b1).row(0);
  Mat act = pre.unaryExpr([](double v) { return gelu(v); });
  Mat y = act * p.mat(s.w2);
  y.rowwise() += p.mat(s.b2).row(0);
  if (c) *c = {x, std::move(pre)};
  return y;
}

inline Mat feed_forward_backward(const ModelParams& p, ModelParams& grad, const FfSlots& s, const FfCache& c,
                                 const Mat& dy) {
  const Mat act = c.pre.unaryExpr([](double v) { return gelu(v); });
  grad.mat(s.w2) += act.transpose() * dy;
  grad.mat(s.b2).row(0) += dy.colwise().sum();
  const Mat dpre = (dy * p.mat(s.w2).transpose()).array() * c.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  grad.mat(s.w1) += c.in.transpose() * dpre;
  grad.mat(s.b1).row(0) += dpre.colwise().sum();
  return dpre * p.mat(s.w1).transpose();
}

struct AttnCache {
  Mat xq, xkv, q, k, v, concat;
  std::vector<Mat> probs;
};

inline void softmax_rows(Mat& s) {
  for (long i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

/// Attention of queries `q` (already projected) over projected keys/values.
/// With `causal`, query i sees keys [0, i + key_offset].
inline Mat attend(const Mat& q, const Mat& k, const Mat& v, unsigned heads, bool causal, long key_offset,
                  std::vector<Mat>* probs) {
  const long dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(q.rows(), q.cols());
  if (probs) probs->assign(heads, Mat());
  for (unsigned h = 0; h < heads; ++h) {
    Mat s = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
    if (causal)
      for (long i = 0; i < s.rows(); ++i)
        for (long j = i + key_offset + 1; j < s.cols(); ++j) s(i, j) = -std::numeric_limits<double>::infinity();
    softmax_rows(s);
    out.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
    if (probs) (*probs)[h] = std::move(s);
  }
  return out;
}

inline Mat attention(const ModelParams& p, const AttnSlots& s, const Mat& xq, const Mat& xkv, bool causal,
                     AttnCache* c) {
  Mat q = xq * p.mat(s.wq);
  Mat k = xkv * p.mat(s.wk);
  Mat v = xkv * p.mat(s.wv);
  std::vector<Mat> probs;
  Mat concat = attend(q, k, v, p.config().n_heads, causal, 0, c ? &probs : nullptr);
  Mat y = concat * p.mat(s.wo);
  if (c) *c = {xq, xkv, std::move(q), std::move(k), std::move(v), std::move(concat), std::move(probs)};
  return y;
}

/// Returns gradients w.r.t. the query input and the key/value input.
inline std::pair<Mat, Mat> attention_backward(const ModelParams& p, ModelParams& grad, const AttnSlots& s,
                                              const AttnCache& c, const Mat& dy) {
  const unsigned heads = p.config().n_heads;
  const long dh = c.q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  grad.mat(s.wo) += c.concat.transpose() * dy;
  const Mat dconcat = dy * p.mat(s.wo).transpose();
  Mat dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (unsigned h = 0; h < heads; ++h) {
    const Mat& a = c.probs[h];
    const Mat dout = dconcat.middleCols(h * dh, dh);
    const Mat da = dout * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * dout;
    Mat ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
    ds *= scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  grad.mat(s.wq) += c.xq.transpose() * dq;
  grad.mat(s.wk) += c.xkv.transpose() * dk;
  grad.mat(s.wv) += c.xkv.transpose() * dv;
  Mat dxq = dq * p.mat(s.wq).transpose();
  Mat dxkv = dk * p.mat(s.wk).transpose() + dv * p.mat(s.wv).transpose();
  return {std::move(dxq), std::move(dxkv)};
}

struct EncLayerCache {
  NormCache n1, n2;
  AttnCache attn;
  FfCache ff;
};

struct DecLayerCache {
  NormCache n1, n2, n3;
  AttnCache self_attn, cross;
  FfCache ff;
};

}  // namespace detail

/// Encoder input ids: the epsilon bucket token followed by the source tokens.
inline std::vector<std::uint32_t> encoder_ids(const ModelConfig& cfg, const std::vector<Token>& source,
                                              const ErrorBound& eps) {
  if (source.size() + 1 > cfg.max_len) throw CapacityError("source sequence longer than the model's max_len");
  std::vector<std::uint32_t> ids{cfg.bucket_id(eps)};
  for (const auto& t : source) ids.push_back(t.id(cfg.num_inputs));
  return ids;
}

/// Decoder input ids: BOS followed by the first prefix.size() tokens.
inline std::vector<std::uint32_t> decoder_ids(const ModelConfig& cfg, const std::vector<Token>& prefix) {
  if (prefix.size() + 1 > cfg.max_len) throw CapacityError("decoded prefix longer than the model's max_len");
  std::vector<std::uint32_t> ids{cfg.bos_id()};
  for (const auto& t : prefix) ids.push_back(t.id(cfg.num_inputs));
  return ids;
}

/// One teacher-forced pass over (source, epsilon, decoder input). Keeps the
/// activations so backward() can run once the logit gradients are known.
class ForwardPass {
public:
  ForwardPass(const ModelParams& p, const std::vector<Token>& source, const ErrorBound& eps,
              const std::vector<Token>& decoder_tokens)
      : p_(p), enc_ids_(encoder_ids(p.config(), source, eps)), dec_ids_(decoder_ids(p.config(), decoder_tokens)) {
    const auto& L = p.layout();
    Mat x = detail::embed(p, enc_ids_);
    enc_.resize(L.enc.size());
    for (std::size_t l = 0; l < L.enc.size(); ++l) {
      auto& c = enc_[l];
      const Mat a = detail::layer_norm(p, L.enc[l].ln1, x, &c.n1);
      x += detail::attention(p, L.enc[l].attn, a, a, false, &c.attn);
      const Mat b = detail::layer_norm(p, L.enc[l].ln2, x, &c.n2);
      x += detail::feed_forward(p, L.enc[l].ff, b, &c.ff);
    }
    enc_out_ = detail::layer_norm(p, L.enc_norm, x, &enc_norm_);

    Mat y = detail::embed(p, dec_ids_);
    dec_.resize(L.dec.size());
    for (std::size_t l = 0; l < L.dec.size(); ++l) {
      auto& c = dec_[l];
      const Mat a = detail::layer_norm(p, L.dec[l].ln1, y, &c.n1);
      y += detail::attention(p, L.dec[l].self_attn, a, a, true, &c.self_attn);
      const Mat b = detail::layer_norm(p, L.dec[l].ln2, y, &c.n2);
      y += detail::attention(p, L.dec[l].cross_attn, b, enc_out_, false, &c.cross);
      const Mat e = detail::layer_norm(p, L.dec[l].ln3, y, &c.n3);
      y += detail::feed_forward(p, L.dec[l].ff, e, &c.ff);
    }
    dec_out_ = detail::layer_norm(p, L.dec_norm, y, &dec_norm_);
    logits_ = dec_out_ * p.mat(L.head_w);
    logits_.rowwise() += p.mat(L.head_b).row(0);
  }

  /// Row t holds the logits for the token after decoder input t.
  const Mat& logits() const noexcept { return logits_; }

  void backward(const Mat& dlogits, ModelParams& grad) const {
    const auto& p = p_;
    const auto& L = p.layout();
    grad.mat(L.head_w) += dec_out_.transpose() * dlogits;
    grad.mat(L.head_b).row(0) += dlogits.colwise().sum();
    Mat dy = detail::layer_norm_backward(p, grad, L.dec_norm, dec_norm_, dlogits * p.mat(L.head_w).transpose());
    Mat denc = Mat::Zero(enc_out_.rows(), enc_out_.cols());
    for (std::size_t l = L.dec.size(); l-- > 0;) {
      const auto& c = dec_[l];
      const auto& s = L.dec[l];
      dy += detail::layer_norm_backward(p, grad, s.ln3, c.n3, detail::feed_forward_backward(p, grad, s.ff, c.ff, dy));
      auto [dq, dkv] = detail::attention_backward(p, grad, s.cross_attn, c.cross, dy);
      denc += dkv;
      dy += detail::layer_norm_backward(p, grad, s.ln2, c.n2, dq);
      auto [sq, skv] = detail::attention_backward(p, grad, s.self_attn, c.self_attn, dy);
      dy += detail::layer_norm_backward(p, grad, s.ln1, c.n1, sq + skv);
    }
    scatter_embedding(grad, dec_ids_, dy);

    Mat dx = detail::layer_norm_backward(p, grad, L.enc_norm, enc_norm_, denc);
    for (std::size_t l = L.enc.size(); l-- > 0;) {
      const auto& c = enc_[l];
      const auto& s = L.enc[l];
      dx += detail::layer_norm_backward(p, grad, s.ln2, c.n2, detail::feed_forward_backward(p, grad, s.ff, c.ff, dx));
      auto [q, kv] = detail::attention_backward(p, grad, s.attn, c.attn, dx);
      dx += detail::layer_norm_backward(p, grad, s.ln1, c.n1, q + kv);
    }
    scatter_embedding(grad, enc_ids_, dx);
  }

private:
  static void scatter_embedding(ModelParams& grad, const std::vector<std::uint32_t>& ids, const Mat& d) {
    auto E = grad.mat(grad.layout().embedding);
    for (std::size_t i = 0; i < ids.size(); ++i) E.row(ids[i]) += d.row(static_cast<long>(i));
  }

  const ModelParams& p_;
  std::vector<std::uint32_t> enc_ids_, dec_ids_;
  std::vector<detail::EncLayerCache> enc_;
  detail::NormCache enc_norm_, dec_norm_;
  std::vector<detail::DecLayerCache> dec_;
  Mat enc_out_, dec_out_, logits_;
};

/// Next-token logits after `decoded_prefix`.
inline RowVec forward_logits(const ModelParams& p, const std::vector<Token>& source, const ErrorBound& eps,
                             const std::vector<Token>& decoded_prefix) {
  ForwardPass fp(p, source, eps, decoded_prefix);
  return fp.logits().row(fp.logits().rows() - 1);
}

/// Encoder output plus the cross-attention keys/values of every decoder layer.
struct EncodedSource {
  Mat out;
  std::vector<Mat> cross_k, cross_v;
};

inline std::shared_ptr<const EncodedSource> encode_source(const ModelParams& p, const std::vector<Token>& source,
                                                         const ErrorBound& eps) {
  const auto& L = p.layout();
  Mat x = detail::embed(p, encoder_ids(p.config(), source, eps));
  for (const auto& s : L.enc) {
    const Mat a = detail::layer_norm(p, s.ln1, x, nullptr);
    x += detail::attention(p, s.attn, a, a, false, nullptr);
    x += detail::feed_forward(p, s.ff, detail::layer_norm(p, s.ln2, x, nullptr), nullptr);
  }
  auto enc = std::make_shared<EncodedSource>();
  enc->out = detail::layer_norm(p, L.enc_norm, x, nullptr);
  for (const auto& s : L.dec) {
    enc->cross_k.push_back(enc->out * p.mat(s.cross_attn.wk));
    enc->cross_v.push_back(enc->out * p.mat(s.cross_attn.wv));
  }
  return enc;
}

/// Autoregressive decoder with cached self-attention keys and values. Starts
/// with BOS consumed; logits() predicts the next token.
class DecoderSession {
public:
  DecoderSession(const ModelParams& p, std::shared_ptr<const EncodedSource> enc) : p_(&p), enc_(std::move(enc)) {
    const auto& cfg = p.config();
    self_k_.assign(cfg.n_dec_layers, Mat(cfg.max_len, cfg.d_model));
    self_v_.assign(cfg.n_dec_layers, Mat(cfg.max_len, cfg.d_model));
    feed(cfg.bos_id());
  }

  const RowVec& logits() const noexcept { return logits_; }
  std::size_t consumed() const noexcept { return len_ - 1; }

  void push(Token t) { feed(t.id(p_->config().num_inputs)); }

private:
  void feed(std::uint32_t id) {
    const auto& p = *p_;
    const auto& L = p.layout();
    if (len_ >= p.config().max_len) throw CapacityError("decoded prefix longer than the model's max_len");
    const long pos = static_cast<long>(len_);
    Mat y = p.mat(L.embedding).row(id) + detail::sinusoid(len_, p.config().d_model);
    for (std::size_t l = 0; l < L.dec.size(); ++l) {
      const auto& s = L.dec[l];
      const Mat a = detail::layer_norm(p, s.ln1, y, nullptr);
      self_k_[l].row(pos) = a * p.mat(s.self_attn.wk);
      self_v_[l].row(pos) = a * p.mat(s.self_attn.wv);
      const Mat q = a * p.mat(s.self_attn.wq);
      y += detail::attend(q, self_k_[l].topRows(pos + 1), self_v_[l].topRows(pos + 1), p.config().n_heads, false, 0,
                          nullptr) *
           p.mat(s.self_attn.wo);
      const Mat b = detail::layer_norm(p, s.ln2, y, nullptr);
      y += detail::attend(b * p.mat(s.cross_attn.wq), enc_->cross_k[l], enc_->cross_v[l], p.config().n_heads, false, 0,
                          nullptr) *
           p.mat(s.cross_attn.wo);
      y += detail::feed_forward(p, s.ff, detail::layer_norm(p, s.ln3, y, nullptr), nullptr);
    }
    logits_ = detail::layer_norm(p, L.dec_norm, y, nullptr) * p.mat(L.head_w) + p.mat(L.head_b);
    ++len_;
  }

  const ModelParams* p_;
  std::shared_ptr<const EncodedSource> enc_;
  std::vector<Mat> self_k_, self_v_;
  std::size_t len_ = 0;
  RowVec logits_;
};

}  // namespace als::model
