// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/param_vector.hpp"
#include "asgd/real.hpp"
#include "asgd/rng.hpp"

namespace asgd {

enum class ModelKind { linear_regression, mlp_classifier, gru_lm };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linear_regression: return "linear_regression";
    case ModelKind::mlp_classifier: return "mlp_classifier";
    case ModelKind::gru_lm: return "gru_lm";
  }
  return "?";
}

/// Small differentiable models with hand-written analytic gradients.
///
/// Layouts (segment names; offsets follow lexicographic name order):
///   linear_regression: w[in_dim]                       prediction = w.x
///   mlp_classifier:    b1[h] b2[c] w1[in*h] w2[h*c]    tanh hidden, softmax out
///   gru_lm:            emb[V*E] gru_b{h,r,z}[H] gru_u{h,r,z}[H*H]
///                      gru_w{h,r,z}[H*E] out_b[V] out_w[V*H]
/// Matrix storage is row-major with the output unit as the row: w1[i*h+j],
/// w2[j*c+k], gru_w*[k*E+e], gru_u*[k*H+j], out_w[v*H+k].
struct ModelSpec {
  ModelKind kind = ModelKind::linear_regression;
  int in_dim = 0;   // linear, mlp
  int hidden = 0;   // mlp, gru
  int classes = 0;  // mlp
  int vocab = 0;    // gru
  int embed_dim = 0;  // gru

  static ModelSpec linear(int in_dim) {
    ModelSpec s;
    s.kind = ModelKind::linear_regression;
    s.in_dim = in_dim;
    s.validate();
    return s;
  }
  static ModelSpec mlp(int in_dim, int hidden, int classes) {
    ModelSpec s;
    s.kind = ModelKind::mlp_classifier;
    s.in_dim = in_dim;
    s.hidden = hidden;
    s.classes = classes;
    s.validate();
    return s;
  }
  static ModelSpec gru(int vocab, int embed_dim, int hidden) {
    ModelSpec s;
    s.kind = ModelKind::gru_lm;
    s.vocab = vocab;
    s.embed_dim = embed_dim;
    s.hidden = hidden;
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
      case ModelKind::linear_regression:
        if (in_dim < 1) throw std::invalid_argument("linear: in_dim must be >= 1");
        break;
      case ModelKind::mlp_classifier:
        if (in_dim < 1 || hidden < 1 || classes < 1)
          throw std::invalid_argument("mlp: all dims must be >= 1");
        break;
      case ModelKind::gru_lm:
        if (vocab < 2) throw std::invalid_argument("gru_lm: vocab must be >= 2");
        if (embed_dim < 1 || hidden < 1)
          throw std::invalid_argument("gru_lm: all dims must be >= 1");
        break;
    }
  }

  LayoutPtr layout() const {
    validate();
    switch (kind) {
      case ModelKind::linear_regression:
        return ParamLayout::make({{"w", static_cast<std::size_t>(in_dim)}});
      case ModelKind::mlp_classifier: {
        const auto in = static_cast<std::size_t>(in_dim);
        const auto h = static_cast<std::size_t>(hidden);
        const auto c = static_cast<std::size_t>(classes);
        return ParamLayout::make({{"w1", in * h}, {"b1", h}, {"w2", h * c}, {"b2", c}});
      }
      case ModelKind::gru_lm: {
        const auto v = static_cast<std::size_t>(vocab);
        const auto e = static_cast<std::size_t>(embed_dim);
        const auto h = static_cast<std::size_t>(hidden);
        return ParamLayout::make({{"emb", v * e},
                                  {"gru_wz", h * e}, {"gru_wr", h * e}, {"gru_wh", h * e},
                                  {"gru_uz", h * h}, {"gru_ur", h * h}, {"gru_uh", h * h},
                                  {"gru_bz", h}, {"gru_br", h}, {"gru_bh", h},
                                  {"out_w", v * h}, {"out_b", v}});
      }
    }
    throw std::logic_error("unreachable");
  }
};

/// One mini-batch: token sequences for gru_lm, feature rows otherwise.
/// token_count is the unit the word budget and lr normalization work in:
/// total sequence tokens for gru_lm, row count for the other kinds.
struct Batch {
  std::vector<std::vector<int>> seqs;   // gru_lm
  std::vector<std::vector<real>> xs;    // linear, mlp
  std::vector<real> ys;                 // linear targets
  std::vector<int> labels;              // mlp labels

  long token_count() const {
    if (!seqs.empty()) {
      long n = 0;
      for (const auto& s : seqs) n += static_cast<long>(s.size());
      return n;
    }
    return static_cast<long>(xs.size());
  }
  bool empty() const { return seqs.empty() && xs.empty(); }
};

struct LossResult {
  double loss;
  long tokens;
};

struct BackwardResult {
  ParamVector grad;
  double loss;
  long tokens;
};

namespace detail {

inline real sigmoid(real a) {
  if (a >= 0) return real(1) / (real(1) + std::exp(-a));
  const real ea = std::exp(a);
  return ea / (real(1) + ea);
}

// log(sum(exp(logits))) with max subtraction; also writes probabilities.
inline double softmax_logsumexp(std::span<const real> logits, std::span<real> probs) {
  real mx = logits[0];
  for (real l : logits) mx = std::max(mx, l);
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    z += probs[i];
  }
  const real inv = static_cast<real>(1.0 / z);
  for (auto& p : probs) p *= inv;
  return std::log(z) + static_cast<double>(mx);
}

inline void check_batch(const ModelSpec& spec, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  switch (spec.kind) {
    case ModelKind::linear_regression:
      if (batch.xs.size() != batch.ys.size())
        throw std::invalid_argument("linear batch needs one target per row");
      for (const auto& x : batch.xs)
        if (static_cast<int>(x.size()) != spec.in_dim)
          throw std::invalid_argument("feature width does not match in_dim");
      break;
    case ModelKind::mlp_classifier:
      if (batch.xs.size() != batch.labels.size())
        throw std::invalid_argument("mlp batch needs one label per row");
      for (const auto& x : batch.xs)
        if (static_cast<int>(x.size()) != spec.in_dim)
          throw std::invalid_argument("feature width does not match in_dim");
      for (int l : batch.labels)
        if (l < 0 || l >= spec.classes) throw std::invalid_argument("label out of range");
      break;
    case ModelKind::gru_lm:
      if (batch.seqs.empty()) throw std::invalid_argument("gru_lm batch needs sequences");
      for (const auto& s : batch.seqs) {
        if (s.empty()) throw std::invalid_argument("empty sequence");
        for (int t : s)
          if (t < 0 || t >= spec.vocab) throw std::invalid_argument("token out of vocab");
      }
      break;
  }
}

// Per-sentence GRU pass. The first prediction conditions on a zero input
// embedding and a zero initial state, so a sentence of length L yields
// exactly L predictions and per-token losses are well defined.
//
//   z = sigmoid(Wz x + Uz h + bz)      update gate
//   r = sigmoid(Wr x + Ur h + br)      reset gate
//   c = tanh(Wh x + Uh (r*h) + bh)     candidate
//   h' = (1 - z) * h + z * c
struct GruViews {
  const real *emb, *wz, *wr, *wh, *uz, *ur, *uh, *bz, *br, *bh, *ow, *ob;
  int V, E, H;

  explicit GruViews(const ModelSpec& spec, const ParamVector& p)
      : emb(p.seg("emb").data()),
        wz(p.seg("gru_wz").data()), wr(p.seg("gru_wr").data()), wh(p.seg("gru_wh").data()),
        uz(p.seg("gru_uz").data()), ur(p.seg("gru_ur").data()), uh(p.seg("gru_uh").data()),
        bz(p.seg("gru_bz").data()), br(p.seg("gru_br").data()), bh(p.seg("gru_bh").data()),
        ow(p.seg("out_w").data()), ob(p.seg("out_b").data()),
        V(spec.vocab), E(spec.embed_dim), H(spec.hidden) {}
};

struct GruTrace {
  // step-major caches, H (or V) entries per step
  std::vector<real> z, r, c, h, probs;
  void resize(std::size_t steps, int H, int V) {
    z.assign(steps * H, 0);
    r.assign(steps * H, 0);
    c.assign(steps * H, 0);
    h.assign(steps * H, 0);
    probs.assign(steps * V, 0);
  }
};

inline double gru_forward_sentence(const GruViews& m, const std::vector<int>& seq,
                                   GruTrace* trace) {
  const int H = m.H, E = m.E, V = m.V;
  const std::size_t L = seq.size();
  static thread_local std::vector<real> hbuf, sbuf, logits, zbuf, rbuf, cbuf, pbuf;
  hbuf.assign(H, 0);
  sbuf.assign(H, 0);
  logits.assign(V, 0);
  zbuf.assign(H, 0);
  rbuf.assign(H, 0);
  cbuf.assign(H, 0);
  pbuf.assign(V, 0);

  double loss = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const real* x = (i == 0) ? nullptr : m.emb + static_cast<std::size_t>(seq[i - 1]) * E;
    real* zt = trace ? trace->z.data() + i * H : zbuf.data();
    real* rt = trace ? trace->r.data() + i * H : rbuf.data();
    real* ct = trace ? trace->c.data() + i * H : cbuf.data();

    for (int k = 0; k < H; ++k) {
      real az = m.bz[k];
      real ar = m.br[k];
      if (x) {
        const real* wzr = m.wz + static_cast<std::size_t>(k) * E;
        const real* wrr = m.wr + static_cast<std::size_t>(k) * E;
        for (int e = 0; e < E; ++e) {
          az += wzr[e] * x[e];
          ar += wrr[e] * x[e];
        }
      }
      const real* uzr = m.uz + static_cast<std::size_t>(k) * H;
      const real* urr = m.ur + static_cast<std::size_t>(k) * H;
      for (int j = 0; j < H; ++j) {
        az += uzr[j] * hbuf[j];
        ar += urr[j] * hbuf[j];
      }
      zt[k] = sigmoid(az);
      rt[k] = sigmoid(ar);
    }
    for (int k = 0; k < H; ++k) sbuf[k] = rt[k] * hbuf[k];
    for (int k = 0; k < H; ++k) {
      real ac = m.bh[k];
      if (x) {
        const real* whr = m.wh + static_cast<std::size_t>(k) * E;
        for (int e = 0; e < E; ++e) ac += whr[e] * x[e];
      }
      const real* uhr = m.uh + static_cast<std::size_t>(k) * H;
      for (int j = 0; j < H; ++j) ac += uhr[j] * sbuf[j];
      ct[k] = std::tanh(ac);
    }
    for (int k = 0; k < H; ++k) hbuf[k] = (real(1) - zt[k]) * hbuf[k] + zt[k] * ct[k];
    if (trace) std::copy(hbuf.begin(), hbuf.end(), trace->h.begin() + i * H);

    for (int v = 0; v < V; ++v) {
      real a = m.ob[v];
      const real* owr = m.ow + static_cast<std::size_t>(v) * H;
      for (int k = 0; k < H; ++k) a += owr[k] * hbuf[k];
      logits[v] = a;
    }
    real* probs = trace ? trace->probs.data() + i * V : pbuf.data();
    const double lse = softmax_logsumexp({logits.data(), static_cast<std::size_t>(V)},
                                         {probs, static_cast<std::size_t>(V)});
    loss += lse - static_cast<double>(logits[seq[i]]);
  }
  return loss;
}

struct GruGradViews {
  real *emb, *wz, *wr, *wh, *uz, *ur, *uh, *bz, *br, *bh, *ow, *ob;
  explicit GruGradViews(ParamVector& g)
      : emb(g.seg("emb").data()),
        wz(g.seg("gru_wz").data()), wr(g.seg("gru_wr").data()), wh(g.seg("gru_wh").data()),
        uz(g.seg("gru_uz").data()), ur(g.seg("gru_ur").data()), uh(g.seg("gru_uh").data()),
        bz(g.seg("gru_bz").data()), br(g.seg("gru_br").data()), bh(g.seg("gru_bh").data()),
        ow(g.seg("out_w").data()), ob(g.seg("out_b").data()) {}
};

inline void gru_backward_sentence(const GruViews& m, const std::vector<int>& seq,
                                  const GruTrace& tr, GruGradViews& g) {
  const int H = m.H, E = m.E, V = m.V;
  const std::size_t L = seq.size();
  static thread_local std::vector<real> gh, ghp, dac, dar, daz, gx, svec;
  gh.assign(H, 0);
  ghp.assign(H, 0);
  dac.assign(H, 0);
  dar.assign(H, 0);
  daz.assign(H, 0);
  gx.assign(E, 0);
  svec.assign(H, 0);

  for (std::size_t ii = L; ii-- > 0;) {
    const real* z = tr.z.data() + ii * H;
    const real* r = tr.r.data() + ii * H;
    const real* c = tr.c.data() + ii * H;
    const real* h = tr.h.data() + ii * H;
    const real* hprev = (ii == 0) ? nullptr : tr.h.data() + (ii - 1) * H;
    const real* probs = tr.probs.data() + ii * V;
    const real* x = (ii == 0) ? nullptr : m.emb + static_cast<std::size_t>(seq[ii - 1]) * E;

    // output layer: dlogit = p - onehot(target)
    for (int v = 0; v < V; ++v) {
      const real dl = probs[v] - (v == seq[ii] ? real(1) : real(0));
      g.ob[v] += dl;
      real* owg = g.ow + static_cast<std::size_t>(v) * H;
      const real* owr = m.ow + static_cast<std::size_t>(v) * H;
      for (int k = 0; k < H; ++k) {
        owg[k] += dl * h[k];
        gh[k] += dl * owr[k];
      }
    }

    for (int k = 0; k < H; ++k) {
      const real hp = hprev ? hprev[k] : real(0);
      svec[k] = r[k] * hp;
      const real dz = gh[k] * (c[k] - hp);
      const real dc = gh[k] * z[k];
      ghp[k] = gh[k] * (real(1) - z[k]);
      dac[k] = dc * (real(1) - c[k] * c[k]);
      daz[k] = dz * z[k] * (real(1) - z[k]);
    }

    // candidate path: ds = Uh^T dac; dr = ds*hprev; ghp += ds*r
    for (int k = 0; k < H; ++k) {
      g.bh[k] += dac[k];
      real* uhg = g.uh + static_cast<std::size_t>(k) * H;
      for (int j = 0; j < H; ++j) uhg[j] += dac[k] * svec[j];
    }
    for (int j = 0; j < H; ++j) {
      real ds = 0;
      for (int k = 0; k < H; ++k) ds += m.uh[static_cast<std::size_t>(k) * H + j] * dac[k];
      const real hp = hprev ? hprev[j] : real(0);
      dar[j] = (ds * hp) * r[j] * (real(1) - r[j]);
      ghp[j] += ds * r[j];
    }

    // gate paths
    for (int k = 0; k < H; ++k) {
      g.br[k] += dar[k];
      g.bz[k] += daz[k];
      real* urg = g.ur + static_cast<std::size_t>(k) * H;
      real* uzg = g.uz + static_cast<std::size_t>(k) * H;
      for (int j = 0; j < H; ++j) {
        const real hpj = hprev ? hprev[j] : real(0);
        urg[j] += dar[k] * hpj;
        uzg[j] += daz[k] * hpj;
      }
    }
    for (int j = 0; j < H; ++j) {
      real acc = 0;
      for (int k = 0; k < H; ++k) {
        acc += m.ur[static_cast<std::size_t>(k) * H + j] * dar[k] +
               m.uz[static_cast<std::size_t>(k) * H + j] * daz[k];
      }
      ghp[j] += acc;
    }

    if (x) {
      std::fill(gx.begin(), gx.end(), real(0));
      for (int k = 0; k < H; ++k) {
        const real* whr = m.wh + static_cast<std::size_t>(k) * E;
        const real* wrr = m.wr + static_cast<std::size_t>(k) * E;
        const real* wzr = m.wz + static_cast<std::size_t>(k) * E;
        real* whg = g.wh + static_cast<std::size_t>(k) * E;
        real* wrg = g.wr + static_cast<std::size_t>(k) * E;
        real* wzg = g.wz + static_cast<std::size_t>(k) * E;
        for (int e = 0; e < E; ++e) {
          whg[e] += dac[k] * x[e];
          wrg[e] += dar[k] * x[e];
          wzg[e] += daz[k] * x[e];
          gx[e] += whr[e] * dac[k] + wrr[e] * dar[k] + wzr[e] * daz[k];
        }
      }
      real* embg = g.emb + static_cast<std::size_t>(seq[ii - 1]) * E;
      for (int e = 0; e < E; ++e) embg[e] += gx[e];
    }

    std::swap(gh, ghp);
    std::fill(ghp.begin(), ghp.end(), real(0));
  }
}

}  // namespace detail

/// Deterministic initialization: each segment filled uniform in
/// (-0.5/sqrt(fan_in), +0.5/sqrt(fan_in)) from a stream keyed by
/// (seed, segment name), so values do not depend on segment order.
/// fan_in is the unit count feeding the segment's outputs (1 for biases
/// would also do; biases share their matrix's fan-in here).
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p(spec.layout());
  auto fan_in = [&](const std::string& name) -> int {
    switch (spec.kind) {
      case ModelKind::linear_regression:
        return spec.in_dim;
      case ModelKind::mlp_classifier:
        if (name == "w1" || name == "b1") return spec.in_dim;
        return spec.hidden;
      case ModelKind::gru_lm:
        if (name == "emb") return spec.embed_dim;
        if (name.starts_with("gru_w")) return spec.embed_dim;
        if (name.starts_with("gru_u") || name.starts_with("gru_b")) return spec.hidden;
        return spec.hidden;  // out_w, out_b
    }
    return 1;
  };
  for (const auto& s : p.layout()->segments()) {
    const double bound = 0.5 / std::sqrt(static_cast<double>(fan_in(s.name)));
    Rng rng(derive_seed(seed, s.name));
    auto span = p.seg(s.name);
    for (auto& x : span) x = static_cast<real>(rng.uniform(-bound, bound));
  }
  return p;
}

/// Sum-reduced loss over the batch: squared error (linear), softmax
/// cross-entropy over rows (mlp) or over every token (gru_lm).
inline LossResult forward_loss(const ModelSpec& spec, const ParamVector& params,
                               const Batch& batch) {
  detail::check_batch(spec, batch);
  if (!(*params.layout() == *spec.layout()))
    throw std::invalid_argument("params do not match model layout");
  double loss = 0;
  switch (spec.kind) {
    case ModelKind::linear_regression: {
      auto w = params.seg("w");
      for (std::size_t n = 0; n < batch.xs.size(); ++n) {
        real pred = 0;
        for (int i = 0; i < spec.in_dim; ++i) pred += w[i] * batch.xs[n][i];
        const double e = static_cast<double>(pred) - static_cast<double>(batch.ys[n]);
        loss += e * e;
      }
      break;
    }
    case ModelKind::mlp_classifier: {
      auto w1 = params.seg("w1");
      auto b1 = params.seg("b1");
      auto w2 = params.seg("w2");
      auto b2 = params.seg("b2");
      const int in = spec.in_dim, h = spec.hidden, c = spec.classes;
      std::vector<real> a1(h), logits(c), probs(c);
      for (std::size_t n = 0; n < batch.xs.size(); ++n) {
        const auto& x = batch.xs[n];
        for (int j = 0; j < h; ++j) {
          real a = b1[j];
          for (int i = 0; i < in; ++i) a += w1[static_cast<std::size_t>(i) * h + j] * x[i];
          a1[j] = std::tanh(a);
        }
        for (int k = 0; k < c; ++k) {
          real a = b2[k];
          for (int j = 0; j < h; ++j) a += w2[static_cast<std::size_t>(j) * c + k] * a1[j];
          logits[k] = a;
        }
        const double lse = detail::softmax_logsumexp(logits, probs);
        loss += lse - static_cast<double>(logits[batch.labels[n]]);
      }
      break;
    }
    case ModelKind::gru_lm: {
      detail::GruViews m(spec, params);
      for (const auto& seq : batch.seqs)
        loss += detail::gru_forward_sentence(m, seq, nullptr);
      break;
    }
  }
  if (!std::isfinite(loss)) {
    require_finite(params, "params");  // name the offending segment if any
    throw NumericalFault("non-finite loss with finite params");
  }
  return {loss, batch.token_count()};
}

/// Analytic gradient of the sum-reduced loss (full backpropagation through
/// time for gru_lm). Also reports the loss, which falls out for free.
inline BackwardResult backward(const ModelSpec& spec, const ParamVector& params,
                               const Batch& batch) {
  detail::check_batch(spec, batch);
  if (!(*params.layout() == *spec.layout()))
    throw std::invalid_argument("params do not match model layout");
  ParamVector grad(params.layout());
  double loss = 0;
  switch (spec.kind) {
    case ModelKind::linear_regression: {
      auto w = params.seg("w");
      auto gw = grad.seg("w");
      for (std::size_t n = 0; n < batch.xs.size(); ++n) {
        real pred = 0;
        for (int i = 0; i < spec.in_dim; ++i) pred += w[i] * batch.xs[n][i];
        const real e = pred - batch.ys[n];
        loss += static_cast<double>(e) * static_cast<double>(e);
        for (int i = 0; i < spec.in_dim; ++i) gw[i] += 2 * e * batch.xs[n][i];
      }
      break;
    }
    case ModelKind::mlp_classifier: {
      auto w1 = params.seg("w1");
      auto b1 = params.seg("b1");
      auto w2 = params.seg("w2");
      auto b2 = params.seg("b2");
      auto gw1 = grad.seg("w1");
      auto gb1 = grad.seg("b1");
      auto gw2 = grad.seg("w2");
      auto gb2 = grad.seg("b2");
      const int in = spec.in_dim, h = spec.hidden, c = spec.classes;
      std::vector<real> a1(h), logits(c), probs(c), dz1(h);
      for (std::size_t n = 0; n < batch.xs.size(); ++n) {
        const auto& x = batch.xs[n];
        for (int j = 0; j < h; ++j) {
          real a = b1[j];
          for (int i = 0; i < in; ++i) a += w1[static_cast<std::size_t>(i) * h + j] * x[i];
          a1[j] = std::tanh(a);
        }
        for (int k = 0; k < c; ++k) {
          real a = b2[k];
          for (int j = 0; j < h; ++j) a += w2[static_cast<std::size_t>(j) * c + k] * a1[j];
          logits[k] = a;
        }
        const double lse = detail::softmax_logsumexp(logits, probs);
        loss += lse - static_cast<double>(logits[batch.labels[n]]);
        for (int j = 0; j < h; ++j) dz1[j] = 0;
        for (int k = 0; k < c; ++k) {
          const real dl = probs[k] - (k == batch.labels[n] ? real(1) : real(0));
          gb2[k] += dl;
          for (int j = 0; j < h; ++j) {
            gw2[static_cast<std::size_t>(j) * c + k] += dl * a1[j];
            dz1[j] += dl * w2[static_cast<std::size_t>(j) * c + k];
          }
        }
        for (int j = 0; j < h; ++j) {
          const real d = dz1[j] * (real(1) - a1[j] * a1[j]);
          gb1[j] += d;
          for (int i = 0; i < in; ++i) gw1[static_cast<std::size_t>(i) * h + j] += d * x[i];
        }
      }
      break;
    }
    case ModelKind::gru_lm: {
      detail::GruViews m(spec, params);
      detail::GruTrace trace;
      // per-sentence scratch, folded in once per sentence so the batch
      // gradient is an exact elementwise sum of per-sentence gradients
      ParamVector scratch(params.layout());
      detail::GruGradViews g(scratch);
      for (const auto& seq : batch.seqs) {
        std::fill(scratch.values().begin(), scratch.values().end(), real(0));
        trace.resize(seq.size(), spec.hidden, spec.vocab);
        loss += detail::gru_forward_sentence(m, seq, &trace);
        detail::gru_backward_sentence(m, seq, trace, g);
        axpy_inplace(real(1), scratch, grad);
      }
      break;
    }
  }
  if (!std::isfinite(loss) || first_nonfinite(grad)) {
    require_finite(grad, "gradient");
    require_finite(params, "params");
    throw NumericalFault("non-finite loss with finite params and gradient");
  }
  return {std::move(grad), loss, batch.token_count()};
}

/// Central-difference check of `backward` against `forward_loss` only:
/// (L(p + h e_i) - L(p - h e_i)) / 2h per coordinate. Returns the max
/// relative error with denominator max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const ModelSpec& spec, const ParamVector& params,
                         const Batch& batch, double h) {
  if (!(h > 0)) throw std::invalid_argument("h must be > 0");
  const ParamVector analytic = backward(spec, params, batch).grad;
  ParamVector probe = params;
  double max_rel = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const real orig = probe[i];
    probe[i] = orig + static_cast<real>(h);
    const double lp = forward_loss(spec, probe, batch).loss;
    probe[i] = orig - static_cast<real>(h);
    const double lm = forward_loss(spec, probe, batch).loss;
    probe[i] = orig;
    const double numeric = (lp - lm) / (2 * h);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

/// Seeded random batch for gradient checks and oracle tests.
inline Batch random_batch(const ModelSpec& spec, std::uint64_t seed, int n,
                          int len_min = 3, int len_max = 8) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  Rng rng(derive_seed(seed, "batch"));
  Batch b;
  switch (spec.kind) {
    case ModelKind::linear_regression:
      for (int i = 0; i < n; ++i) {
        std::vector<real> x(spec.in_dim);
        for (auto& v : x) v = static_cast<real>(rng.uniform(-1, 1));
        b.xs.push_back(std::move(x));
        b.ys.push_back(static_cast<real>(rng.uniform(-2, 2)));
      }
      break;
    case ModelKind::mlp_classifier:
      for (int i = 0; i < n; ++i) {
        std::vector<real> x(spec.in_dim);
        for (auto& v : x) v = static_cast<real>(rng.uniform(-1, 1));
        b.xs.push_back(std::move(x));
        b.labels.push_back(static_cast<int>(rng.below(spec.classes)));
      }
      break;
    case ModelKind::gru_lm:
      for (int i = 0; i < n; ++i) {
        const int len = len_min + static_cast<int>(rng.below(len_max - len_min + 1));
        std::vector<int> s(len);
        for (auto& t : s) t = static_cast<int>(rng.below(spec.vocab));
        b.seqs.push_back(std::move(s));
      }
      break;
  }
  return b;
}

}  // namespace asgd
