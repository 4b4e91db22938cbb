#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "detox/encoder.hpp"
#include "detox/errors.hpp"
#include "detox/kernels.hpp"
#include "detox/rng.hpp"

namespace detox::encoder {
namespace k = detox::kernels;
namespace {

constexpr double kLnEps = 1e-5;

void add_bias_rows(double* x, const std::vector<double>& b, std::size_t n,
                   std::size_t d) {
  for (std::size_t i = 0; i < n; ++i)
    k::add(x + i * d, b.data(), x + i * d, d);
}

// y = g .* (x - mean)/sqrt(var + eps) + b, per row; stores xhat and rstd.
void layer_norm(const double* x, const std::vector<double>& g,
                const std::vector<double>& b, std::size_t n, std::size_t d,
                double* y, double* xhat, double* rstd) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * d;
    const double mean = k::sum(xi, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xi[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = r;
    double* xh = xhat + i * d;
    double* yi = y + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xi[j] - mean) * r;
      yi[j] = g[j] * xh[j] + b[j];
    }
  }
}

// Reverse of layer_norm. Adds dx into dx_out; accumulates dg/db when given.
void layer_norm_backward(const double* dy, const double* xhat,
                         const double* rstd, const std::vector<double>& g,
                         std::size_t n, std::size_t d, double* dx_out,
                         std::vector<double>* dg, std::vector<double>* db) {
  std::vector<double> t(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyi = dy + i * d;
    const double* xh = xhat + i * d;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      t[j] = dyi[j] * g[j];
      m1 += t[j];
      m2 += t[j] * xh[j];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double* dxi = dx_out + i * d;
    for (std::size_t j = 0; j < d; ++j)
      dxi[j] += rstd[i] * (t[j] - m1 - xh[j] * m2);
    if (dg) {
      for (std::size_t j = 0; j < d; ++j) {
        (*dg)[j] += dyi[j] * xh[j];
        (*db)[j] += dyi[j];
      }
    }
  }
}

void copy_head(const double* packed, std::size_t n, std::size_t d,
               std::size_t head, std::size_t dh, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(out + i * dh, packed + i * d + head * dh, dh * sizeof(double));
}

void add_head_back(const double* slice, std::size_t n, std::size_t d,
                   std::size_t head, std::size_t dh, double* packed) {
  for (std::size_t i = 0; i < n; ++i)
    k::add(packed + i * d + head * dh, slice + i * dh,
           packed + i * d + head * dh, dh);
}

void colsum_into(const double* x, std::size_t n, std::size_t d,
                 std::vector<double>& acc) {
  for (std::size_t i = 0; i < n; ++i) k::add(acc.data(), x + i * d, acc.data(), d);
}

std::vector<double> normal_vec(detox::Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return v;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= kNumSpecials)
    throw UsageError("encoder.vocab_size must exceed the special-token count");
  if (dim <= 0 || layers <= 0 || heads <= 0)
    throw UsageError("encoder dimensions must be positive");
  if (dim % heads != 0)
    throw UsageError("encoder.dim must be divisible by encoder.heads");
  if (max_length < 2) throw UsageError("encoder.max_length must be at least 2");
  if (mask_token_id < 0 || mask_token_id >= vocab_size ||
      pad_token_id < 0 || pad_token_id >= vocab_size)
    throw UsageError("special token ids must lie within the vocabulary");
}

struct BuiltinEncoder::Trace {
  std::size_t n = 0;
  struct Layer {
    std::vector<double> xhat1, a;  // [n*d]
    std::vector<double> rstd1;     // [n]
    std::vector<double> q, kk, v;  // [n*d] packed heads
    std::vector<double> probs;     // [heads*n*n]
    std::vector<double> ctx;       // [n*d]
    std::vector<double> x1;        // [n*d]
    std::vector<double> xhat2, a2;  // [n*d]
    std::vector<double> rstd2;      // [n]
    std::vector<double> u, gu;      // [n*4d]
  };
  std::vector<Layer> layers;
  std::vector<double> x_final;  // [n*d] input of the final layer norm
  std::vector<double> xhat_f;   // [n*d]
  std::vector<double> rstd_f;   // [n]
  std::vector<double> h;        // [n*d] contextual output
};

BuiltinEncoder::BuiltinEncoder(EncoderConfig cfg, Tokenizer tok)
    : cfg_(cfg), tok_(std::move(tok)) {
  cfg_.validate();
  if (tok_.vocab_size() > cfg_.vocab_size)
    throw UsageError("tokenizer vocabulary exceeds encoder.vocab_size");
  const auto V = static_cast<std::size_t>(cfg_.vocab_size);
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const auto L = static_cast<std::size_t>(cfg_.max_length);
  const auto ff = 4 * d;

  detox::Rng rng(cfg_.seed);
  params_.tok_emb = normal_vec(rng, V * d, 0.02);
  params_.pos_emb = normal_vec(rng, L * d, 0.02);
  params_.layers.resize(static_cast<std::size_t>(cfg_.layers));
  for (auto& lp : params_.layers) {
    lp.ln1_g.assign(d, 1.0);
    lp.ln1_b.assign(d, 0.0);
    lp.wq = normal_vec(rng, d * d, 0.02);
    lp.wk = normal_vec(rng, d * d, 0.02);
    lp.wv = normal_vec(rng, d * d, 0.02);
    lp.wo = normal_vec(rng, d * d, 0.02);
    lp.bq.assign(d, 0.0);
    lp.bk.assign(d, 0.0);
    lp.bv.assign(d, 0.0);
    lp.bo.assign(d, 0.0);
    lp.ln2_g.assign(d, 1.0);
    lp.ln2_b.assign(d, 0.0);
    lp.w1 = normal_vec(rng, d * ff, 0.02);
    lp.b1.assign(ff, 0.0);
    lp.w2 = normal_vec(rng, ff * d, 0.02);
    lp.b2.assign(d, 0.0);
  }
  params_.lnf_g.assign(d, 1.0);
  params_.lnf_b.assign(d, 0.0);
  params_.mlm_bias.assign(V, 0.0);

  grads_ = params_;
  zero_grads();
}

void BuiltinEncoder::zero_grads() {
  const auto zero = [](std::vector<double>& v) {
    std::fill(v.begin(), v.end(), 0.0);
  };
  zero(grads_.tok_emb);
  zero(grads_.pos_emb);
  for (auto& lp : grads_.layers) {
    zero(lp.ln1_g); zero(lp.ln1_b);
    zero(lp.wq); zero(lp.wk); zero(lp.wv); zero(lp.wo);
    zero(lp.bq); zero(lp.bk); zero(lp.bv); zero(lp.bo);
    zero(lp.ln2_g); zero(lp.ln2_b);
    zero(lp.w1); zero(lp.b1); zero(lp.w2); zero(lp.b2);
  }
  zero(grads_.lnf_g);
  zero(grads_.lnf_b);
  zero(grads_.mlm_bias);
}

void BuiltinEncoder::for_each_param(const ParamVisitor& fn) {
  fn("tok_emb", params_.tok_emb, grads_.tok_emb);
  fn("pos_emb", params_.pos_emb, grads_.pos_emb);
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    auto& p = params_.layers[l];
    auto& g = grads_.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "ln1_g", p.ln1_g, g.ln1_g);
    fn(pre + "ln1_b", p.ln1_b, g.ln1_b);
    fn(pre + "wq", p.wq, g.wq);
    fn(pre + "bq", p.bq, g.bq);
    fn(pre + "wk", p.wk, g.wk);
    fn(pre + "bk", p.bk, g.bk);
    fn(pre + "wv", p.wv, g.wv);
    fn(pre + "bv", p.bv, g.bv);
    fn(pre + "wo", p.wo, g.wo);
    fn(pre + "bo", p.bo, g.bo);
    fn(pre + "ln2_g", p.ln2_g, g.ln2_g);
    fn(pre + "ln2_b", p.ln2_b, g.ln2_b);
    fn(pre + "w1", p.w1, g.w1);
    fn(pre + "b1", p.b1, g.b1);
    fn(pre + "w2", p.w2, g.w2);
    fn(pre + "b2", p.b2, g.b2);
  }
  fn("lnf_g", params_.lnf_g, grads_.lnf_g);
  fn("lnf_b", params_.lnf_b, grads_.lnf_b);
  fn("mlm_bias", params_.mlm_bias, grads_.mlm_bias);
}

TokenizedText BuiltinEncoder::tokenize(const std::string& text) const {
  return tok_.encode(text, cfg_.max_length);
}

EmbeddingSequence BuiltinEncoder::embed(const TokenizedText& t) const {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  if (t.size() == 0) throw UsageError("cannot embed an empty token sequence");
  if (t.size() > static_cast<std::size_t>(cfg_.max_length))
    throw UsageError("token sequence exceeds encoder.max_length");
  EmbeddingSequence e(t.size(), d);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int id = t.subword_ids[i];
    if (id < 0 || id >= cfg_.vocab_size)
      throw UsageError("unknown token id " + std::to_string(id));
    const double* te = params_.tok_emb.data() + static_cast<std::size_t>(id) * d;
    const double* pe = params_.pos_emb.data() + i * d;
    k::add(te, pe, e.row(i), d);
  }
  return e;
}

void BuiltinEncoder::embed_backward(const TokenizedText& t,
                                    const EmbeddingSequence& de) {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  if (de.length != t.size() || de.dim != d)
    throw UsageError("embedding gradient shape mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto id = static_cast<std::size_t>(t.subword_ids[i]);
    k::axpy(1.0, de.row(i), grads_.tok_emb.data() + id * d, d);
    k::axpy(1.0, de.row(i), grads_.pos_emb.data() + i * d, d);
  }
}

void BuiltinEncoder::forward(const EmbeddingSequence& e, Trace& trace) const {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const auto H = static_cast<std::size_t>(cfg_.heads);
  const auto dh = d / H;
  const auto ff = 4 * d;
  const std::size_t n = e.length;
  if (e.dim != d) throw UsageError("embedding dimension mismatch");
  if (n == 0) throw UsageError("cannot encode an empty sequence");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  trace.n = n;
  trace.layers.resize(params_.layers.size());
  std::vector<double> x = e.data;

  std::vector<double> qh(n * dh), kh(n * dh), vh(n * dh), ctxh(n * dh);
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const auto& lp = params_.layers[l];
    auto& tl = trace.layers[l];
    tl.xhat1.resize(n * d);
    tl.rstd1.resize(n);
    tl.a.resize(n * d);
    layer_norm(x.data(), lp.ln1_g, lp.ln1_b, n, d, tl.a.data(),
               tl.xhat1.data(), tl.rstd1.data());

    tl.q.assign(n * d, 0.0);
    tl.kk.assign(n * d, 0.0);
    tl.v.assign(n * d, 0.0);
    k::gemm_nn(tl.a.data(), lp.wq.data(), tl.q.data(), n, d, d);
    k::gemm_nn(tl.a.data(), lp.wk.data(), tl.kk.data(), n, d, d);
    k::gemm_nn(tl.a.data(), lp.wv.data(), tl.v.data(), n, d, d);
    add_bias_rows(tl.q.data(), lp.bq, n, d);
    add_bias_rows(tl.kk.data(), lp.bk, n, d);
    add_bias_rows(tl.v.data(), lp.bv, n, d);

    tl.probs.assign(H * n * n, 0.0);
    tl.ctx.assign(n * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      copy_head(tl.q.data(), n, d, h, dh, qh.data());
      copy_head(tl.kk.data(), n, d, h, dh, kh.data());
      copy_head(tl.v.data(), n, d, h, dh, vh.data());
      double* probs = tl.probs.data() + h * n * n;
      k::gemm_nt(qh.data(), kh.data(), probs, n, dh, n);
      k::scale(scale, probs, n * n);
      for (std::size_t i = 0; i < n; ++i) k::softmax(probs + i * n, n);
      std::fill(ctxh.begin(), ctxh.end(), 0.0);
      k::gemm_nn(probs, vh.data(), ctxh.data(), n, n, dh);
      add_head_back(ctxh.data(), n, d, h, dh, tl.ctx.data());
    }

    tl.x1 = x;  // residual
    std::vector<double> attn(n * d, 0.0);
    k::gemm_nn(tl.ctx.data(), lp.wo.data(), attn.data(), n, d, d);
    add_bias_rows(attn.data(), lp.bo, n, d);
    k::add(tl.x1.data(), attn.data(), tl.x1.data(), n * d);

    tl.xhat2.resize(n * d);
    tl.rstd2.resize(n);
    tl.a2.resize(n * d);
    layer_norm(tl.x1.data(), lp.ln2_g, lp.ln2_b, n, d, tl.a2.data(),
               tl.xhat2.data(), tl.rstd2.data());

    tl.u.assign(n * ff, 0.0);
    k::gemm_nn(tl.a2.data(), lp.w1.data(), tl.u.data(), n, d, ff);
    add_bias_rows(tl.u.data(), lp.b1, n, ff);
    tl.gu.resize(n * ff);
    k::gelu(tl.u.data(), tl.gu.data(), n * ff);

    x = tl.x1;  // residual
    std::vector<double> fout(n * d, 0.0);
    k::gemm_nn(tl.gu.data(), lp.w2.data(), fout.data(), n, ff, d);
    add_bias_rows(fout.data(), lp.b2, n, d);
    k::add(x.data(), fout.data(), x.data(), n * d);
  }

  trace.x_final = x;
  trace.xhat_f.resize(n * d);
  trace.rstd_f.resize(n);
  trace.h.resize(n * d);
  layer_norm(x.data(), params_.lnf_g, params_.lnf_b, n, d, trace.h.data(),
             trace.xhat_f.data(), trace.rstd_f.data());
}

EmbeddingSequence BuiltinEncoder::backward(const Trace& trace,
                                           const std::vector<double>& cotangent,
                                           Params* pg) const {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const auto H = static_cast<std::size_t>(cfg_.heads);
  const auto dh = d / H;
  const auto ff = 4 * d;
  const std::size_t n = trace.n;
  if (cotangent.size() != n * d)
    throw UsageError("contextual cotangent has the wrong shape");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // final layer norm
  std::vector<double> dx(n * d, 0.0);
  layer_norm_backward(cotangent.data(), trace.xhat_f.data(),
                      trace.rstd_f.data(), params_.lnf_g, n, d, dx.data(),
                      pg ? &pg->lnf_g : nullptr, pg ? &pg->lnf_b : nullptr);

  std::vector<double> qh(n * dh), kh(n * dh), vh(n * dh);
  std::vector<double> dctxh(n * dh), dP(n * n), dS(n * n), dqh(n * dh),
      dkh(n * dh), dvh(n * dh);

  for (std::size_t li = params_.layers.size(); li-- > 0;) {
    const auto& lp = params_.layers[li];
    const auto& tl = trace.layers[li];
    LayerParams* lgp = pg ? &pg->layers[li] : nullptr;

    // ffn: x2 = x1 + gelu(ln2(x1) W1 + b1) W2 + b2; dx currently d(x2)
    std::vector<double> dgu(n * ff, 0.0);
    k::gemm_nt(dx.data(), lp.w2.data(), dgu.data(), n, d, ff);
    if (lgp) {
      k::gemm_tn(tl.gu.data(), dx.data(), lgp->w2.data(), ff, n, d);
      colsum_into(dx.data(), n, d, lgp->b2);
    }
    std::vector<double> du(n * ff);
    k::gelu_backward(tl.u.data(), dgu.data(), du.data(), n * ff);
    std::vector<double> da2(n * d, 0.0);
    k::gemm_nt(du.data(), lp.w1.data(), da2.data(), n, ff, d);
    if (lgp) {
      k::gemm_tn(tl.a2.data(), du.data(), lgp->w1.data(), d, n, ff);
      colsum_into(du.data(), n, ff, lgp->b1);
    }
    // dx1 = dx (residual) + ln2 backward of da2
    std::vector<double> dx1 = dx;
    layer_norm_backward(da2.data(), tl.xhat2.data(), tl.rstd2.data(), lp.ln2_g,
                        n, d, dx1.data(), lgp ? &lgp->ln2_g : nullptr,
                        lgp ? &lgp->ln2_b : nullptr);

    // attention: x1 = x + (ctx Wo + bo)
    std::vector<double> dctx(n * d, 0.0);
    k::gemm_nt(dx1.data(), lp.wo.data(), dctx.data(), n, d, d);
    if (lgp) {
      k::gemm_tn(tl.ctx.data(), dx1.data(), lgp->wo.data(), d, n, d);
      colsum_into(dx1.data(), n, d, lgp->bo);
    }

    std::vector<double> dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      copy_head(tl.q.data(), n, d, h, dh, qh.data());
      copy_head(tl.kk.data(), n, d, h, dh, kh.data());
      copy_head(tl.v.data(), n, d, h, dh, vh.data());
      copy_head(dctx.data(), n, d, h, dh, dctxh.data());
      const double* probs = tl.probs.data() + h * n * n;

      std::fill(dP.begin(), dP.end(), 0.0);
      k::gemm_nt(dctxh.data(), vh.data(), dP.data(), n, dh, n);
      std::fill(dvh.begin(), dvh.end(), 0.0);
      k::gemm_tn(probs, dctxh.data(), dvh.data(), n, n, dh);

      // softmax rows backward, then fold in the 1/sqrt(dh) scale
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = probs + i * n;
        const double* dpi = dP.data() + i * n;
        double inner = k::dot(dpi, p, n);
        double* dsi = dS.data() + i * n;
        for (std::size_t j = 0; j < n; ++j)
          dsi[j] = p[j] * (dpi[j] - inner) * scale;
      }

      std::fill(dqh.begin(), dqh.end(), 0.0);
      k::gemm_nn(dS.data(), kh.data(), dqh.data(), n, n, dh);
      std::fill(dkh.begin(), dkh.end(), 0.0);
      k::gemm_tn(dS.data(), qh.data(), dkh.data(), n, n, dh);

      add_head_back(dqh.data(), n, d, h, dh, dq.data());
      add_head_back(dkh.data(), n, d, h, dh, dk.data());
      add_head_back(dvh.data(), n, d, h, dh, dv.data());
    }

    std::vector<double> da(n * d, 0.0);
    k::gemm_nt(dq.data(), lp.wq.data(), da.data(), n, d, d);
    k::gemm_nt(dk.data(), lp.wk.data(), da.data(), n, d, d);
    k::gemm_nt(dv.data(), lp.wv.data(), da.data(), n, d, d);
    if (lgp) {
      k::gemm_tn(tl.a.data(), dq.data(), lgp->wq.data(), d, n, d);
      k::gemm_tn(tl.a.data(), dk.data(), lgp->wk.data(), d, n, d);
      k::gemm_tn(tl.a.data(), dv.data(), lgp->wv.data(), d, n, d);
      colsum_into(dq.data(), n, d, lgp->bq);
      colsum_into(dk.data(), n, d, lgp->bk);
      colsum_into(dv.data(), n, d, lgp->bv);
    }

    // dx(next lower) = dx1 (residual) + ln1 backward of da
    dx = dx1;
    layer_norm_backward(da.data(), tl.xhat1.data(), tl.rstd1.data(), lp.ln1_g,
                        n, d, dx.data(), lgp ? &lgp->ln1_g : nullptr,
                        lgp ? &lgp->ln1_b : nullptr);
  }

  EmbeddingSequence de(n, d);
  de.data = std::move(dx);
  return de;
}

EncoderOutput BuiltinEncoder::encode(const EmbeddingSequence& e) const {
  Trace trace;
  forward(e, trace);
  EncoderOutput out;
  out.length = e.length;
  out.dim = e.dim;
  out.contextual = std::move(trace.h);
  out.pooled.assign(out.contextual.begin(),
                    out.contextual.begin() + static_cast<long>(e.dim));
  return out;
}

std::pair<EncoderOutput, EmbeddingSequence> BuiltinEncoder::encode_with_vjp(
    const EmbeddingSequence& e, const CotangentFn& cotangent) const {
  Trace trace;
  forward(e, trace);
  EncoderOutput out;
  out.length = e.length;
  out.dim = e.dim;
  out.contextual = trace.h;
  out.pooled.assign(out.contextual.begin(),
                    out.contextual.begin() + static_cast<long>(e.dim));
  const std::vector<double> cot = cotangent(out);
  EmbeddingSequence de = backward(trace, cot, nullptr);
  return {std::move(out), std::move(de)};
}

std::pair<EncoderOutput, EmbeddingSequence> BuiltinEncoder::encode_backward(
    const EmbeddingSequence& e, const CotangentFn& cotangent) {
  Trace trace;
  forward(e, trace);
  EncoderOutput out;
  out.length = e.length;
  out.dim = e.dim;
  out.contextual = trace.h;
  out.pooled.assign(out.contextual.begin(),
                    out.contextual.begin() + static_cast<long>(e.dim));
  const std::vector<double> cot = cotangent(out);
  EmbeddingSequence de = backward(trace, cot, &grads_);
  return {std::move(out), std::move(de)};
}

std::vector<double> BuiltinEncoder::mlm_logits(const EncoderOutput& out,
                                               std::size_t position) const {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const auto V = static_cast<std::size_t>(cfg_.vocab_size);
  if (position >= out.length) throw UsageError("mlm position out of range");
  std::vector<double> z(params_.mlm_bias);
  const double* h = out.row(position);
  k::gemm_nn(params_.tok_emb.data(), h, z.data(), V, d, 1);
  return z;
}

void BuiltinEncoder::mlm_logits_backward(const EncoderOutput& out,
                                         std::size_t position,
                                         const std::vector<double>& dlogits,
                                         std::vector<double>& dctx) {
  const auto d = static_cast<std::size_t>(cfg_.dim);
  const auto V = static_cast<std::size_t>(cfg_.vocab_size);
  if (dlogits.size() != V) throw UsageError("dlogits has the wrong size");
  if (dctx.size() != out.length * d)
    throw UsageError("dctx has the wrong size");
  const double* h = out.row(position);
  // dh += E^T dlogits
  k::gemm_tn(params_.tok_emb.data(), dlogits.data(),
             dctx.data() + position * d, d, V, 1);
  // dE += dlogits h^T
  k::gemm_nn(dlogits.data(), h, grads_.tok_emb.data(), V, 1, d);
  // db += dlogits
  k::axpy(1.0, dlogits.data(), grads_.mlm_bias.data(), V);
}

std::vector<std::vector<MaskFill>> BuiltinEncoder::mlm_predict(
    const TokenizedText& t, int n) const {
  if (n < 1) throw UsageError("mlm_predict requires n >= 1");
  const int excluded = 4;  // mask, pad, start, separator
  if (n > cfg_.vocab_size - excluded)
    throw UsageError("mlm_predict: n exceeds the usable vocabulary size");
  std::vector<std::size_t> mask_positions;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.subword_ids[i] == cfg_.mask_token_id) mask_positions.push_back(i);
  if (mask_positions.empty())
    throw UsageError("mlm_predict: input contains no mask token");

  const EncoderOutput out = encode(embed(t));
  std::vector<std::vector<MaskFill>> result;
  result.reserve(mask_positions.size());
  for (const std::size_t pos : mask_positions) {
    std::vector<double> z = mlm_logits(out, pos);
    k::softmax(z.data(), z.size());
    std::vector<int> ids(z.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (z[static_cast<std::size_t>(a)] != z[static_cast<std::size_t>(b)])
        return z[static_cast<std::size_t>(a)] > z[static_cast<std::size_t>(b)];
      return a < b;
    });
    std::vector<MaskFill> fills;
    for (const int id : ids) {
      if (static_cast<int>(fills.size()) >= n) break;
      if (id == cfg_.mask_token_id || id == cfg_.pad_token_id ||
          id == kClsId || id == kSepId)
        continue;
      MaskFill f;
      f.id = id;
      f.token = id < tok_.vocab_size() ? tok_.token(id)
                                       : "[unused" + std::to_string(id) + "]";
      f.probability = z[static_cast<std::size_t>(id)];
      fills.push_back(std::move(f));
    }
    result.push_back(std::move(fills));
  }
  return result;
}

}  // namespace detox::encoder
