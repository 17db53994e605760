#pragma once

// Reference implementation of the multimodal conditional adapter:
//
//   f_c = Z_m( M_i(pool f_i) + M_a(pool f_a) ) + f_t + Z_t(f_t)
//
// M_i, M_a are token-wise two-layer MLPs (GELU between layers), Z_m, Z_t are
// token-wise linear maps that start at exactly zero. Vision and answer tokens
// are mean-pooled down (or up) to the text token count before the MLPs.
// Row-vector convention: y = x W + b with W stored in x in-dim rows.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dive/error.hpp"

namespace dive::mca {

struct FeatureMatrix {
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major tokens x dim

  static FeatureMatrix zeros(std::size_t tokens, std::size_t dim) { return {tokens, dim, std::vector<double>(tokens * dim, 0.0)}; }

  double& at(std::size_t t, std::size_t d) { return values[t * dim + d]; }
  double at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }

  bool operator==(const FeatureMatrix&) const = default;
};

inline FeatureMatrix random_features(std::size_t tokens, std::size_t dim, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  auto m = FeatureMatrix::zeros(tokens, dim);
  for (auto& v : m.values) v = n(rng);
  return m;
}

inline void check_finite(const FeatureMatrix& m, const char* what) {
  if (m.values.size() != m.tokens * m.dim) throw input_error(std::string(what) + ": values size != tokens*dim");
  for (double v : m.values)
    if (!std::isfinite(v)) throw input_error(std::string(what) + ": non-finite value");
}

struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;  // in x out
  std::vector<double> b;  // out

  static Linear zeros(std::size_t in, std::size_t out) { return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)}; }

  static Linear random(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    auto l = zeros(in, out);
    for (auto& v : l.w) v = n(rng);
    for (auto& v : l.b) v = 0.1 * n(rng);
    return l;
  }

  FeatureMatrix forward(const FeatureMatrix& x) const {
    if (x.dim != in) throw input_error("linear: input dim " + std::to_string(x.dim) + " != " + std::to_string(in));
    auto y = FeatureMatrix::zeros(x.tokens, out);
    for (std::size_t t = 0; t < x.tokens; ++t)
      for (std::size_t o = 0; o < out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < in; ++i) s += x.at(t, i) * w[i * out + o];
        y.at(t, o) = s + b[o];
      }
    return y;
  }

  /// Accumulates dW, db into `grad` and returns dL/dx.
  FeatureMatrix backward(const FeatureMatrix& x, const FeatureMatrix& dy, Linear& grad) const {
    auto dx = FeatureMatrix::zeros(x.tokens, in);
    for (std::size_t t = 0; t < x.tokens; ++t)
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dy.at(t, o);
        grad.b[o] += g;
        for (std::size_t i = 0; i < in; ++i) {
          grad.w[i * out + o] += x.at(t, i) * g;
          dx.at(t, i) += g * w[i * out + o];
        }
      }
    return dx;
  }

  bool operator==(const Linear&) const = default;
};

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

struct Mlp {
  Linear l1;
  Linear l2;

  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
    Linear a = Linear::random(in, hidden, rng);
    Linear b = Linear::random(hidden, out, rng);
    return {std::move(a), std::move(b)};
  }
  static Mlp zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    return {Linear::zeros(in, hidden), Linear::zeros(hidden, out)};
  }

  struct Cache {
    FeatureMatrix x, h, a;
  };

  FeatureMatrix forward(const FeatureMatrix& x, Cache* cache = nullptr) const {
    FeatureMatrix h = l1.forward(x);
    FeatureMatrix a = h;
    for (auto& v : a.values) v = gelu(v);
    FeatureMatrix y = l2.forward(a);
    if (cache) *cache = {x, std::move(h), std::move(a)};
    return y;
  }

  FeatureMatrix backward(const Cache& c, const FeatureMatrix& dy, Mlp& grad) const {
    FeatureMatrix dh = l2.backward(c.a, dy, grad.l2);
    for (std::size_t i = 0; i < dh.values.size(); ++i) dh.values[i] *= gelu_grad(c.h.values[i]);
    return l1.backward(c.x, dh, grad.l1);
  }

  bool operator==(const Mlp&) const = default;
};

struct McaParams {
  Mlp m_i;     // d_m -> h -> d_t
  Mlp m_a;     // d_m -> h -> d_t
  Linear z_m;  // d_t -> d_t
  Linear z_t;  // d_t -> d_t

  /// Random MLPs, zero projections; hidden width defaults to d_t.
  static McaParams init(std::size_t d_m, std::size_t d_t, std::mt19937_64& rng, std::size_t hidden = 0) {
    if (hidden == 0) hidden = d_t;
    McaParams p;
    p.m_i = Mlp::random(d_m, hidden, d_t, rng);
    p.m_a = Mlp::random(d_m, hidden, d_t, rng);
    p.z_m = Linear::zeros(d_t, d_t);
    p.z_t = Linear::zeros(d_t, d_t);
    return p;
  }

  static McaParams zeros_like(const McaParams& p) {
    return {Mlp::zeros(p.m_i.l1.in, p.m_i.l1.out, p.m_i.l2.out), Mlp::zeros(p.m_a.l1.in, p.m_a.l1.out, p.m_a.l2.out),
            Linear::zeros(p.z_m.in, p.z_m.out), Linear::zeros(p.z_t.in, p.z_t.out)};
  }

  /// Every trainable scalar, in a fixed order (m_i, m_a, z_m, z_t; W then b).
  std::vector<double*> parameters() {
    std::vector<double*> out;
    for (Linear* l : {&m_i.l1, &m_i.l2, &m_a.l1, &m_a.l2, &z_m, &z_t}) {
      for (auto& v : l->w) out.push_back(&v);
      for (auto& v : l->b) out.push_back(&v);
    }
    return out;
  }

  bool operator==(const McaParams&) const = default;
};

/// Token bucket i covers [floor(i*n/m), ceil((i+1)*n/m)).
inline std::pair<std::size_t, std::size_t> pool_bucket(std::size_t i, std::size_t n, std::size_t m) {
  return {(i * n) / m, ((i + 1) * n + m - 1) / m};
}

inline FeatureMatrix adaptive_mean_pool(const FeatureMatrix& x, std::size_t out_tokens) {
  if (x.tokens == 0 || out_tokens == 0) throw input_error("adaptive_mean_pool: zero tokens");
  auto y = FeatureMatrix::zeros(out_tokens, x.dim);
  for (std::size_t i = 0; i < out_tokens; ++i) {
    const auto [lo, hi] = pool_bucket(i, x.tokens, out_tokens);
    for (std::size_t t = lo; t < hi; ++t)
      for (std::size_t d = 0; d < x.dim; ++d) y.at(i, d) += x.at(t, d);
    for (std::size_t d = 0; d < x.dim; ++d) y.at(i, d) /= static_cast<double>(hi - lo);
  }
  return y;
}

inline FeatureMatrix adaptive_mean_pool_backward(const FeatureMatrix& dy, std::size_t in_tokens) {
  auto dx = FeatureMatrix::zeros(in_tokens, dy.dim);
  for (std::size_t i = 0; i < dy.tokens; ++i) {
    const auto [lo, hi] = pool_bucket(i, in_tokens, dy.tokens);
    const double share = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t t = lo; t < hi; ++t)
      for (std::size_t d = 0; d < dy.dim; ++d) dx.at(t, d) += dy.at(i, d) * share;
  }
  return dx;
}

struct McaCache {
  FeatureMatrix f_i, f_a, f_t;
  Mlp::Cache mi, ma;
  FeatureMatrix fused;  // M_i(.) + M_a(.)
};

inline void check_shapes(const FeatureMatrix& f_i, const FeatureMatrix& f_a, const FeatureMatrix& f_t,
                         const McaParams& p) {
  if (f_i.tokens == 0 || f_a.tokens == 0 || f_t.tokens == 0) throw input_error("mca: zero tokens");
  if (f_i.dim != f_a.dim) throw input_error("mca: f_i and f_a widths differ");
  if (f_i.dim != p.m_i.l1.in || f_a.dim != p.m_a.l1.in) throw input_error("mca: MLLM width does not match M_i/M_a");
  const std::size_t d_t = f_t.dim;
  if (p.m_i.l2.out != d_t || p.m_a.l2.out != d_t || p.z_m.in != d_t || p.z_m.out != d_t || p.z_t.in != d_t ||
      p.z_t.out != d_t)
    throw input_error("mca: text width does not match adapter output width");
  if (p.m_i.l1.out != p.m_i.l2.in || p.m_a.l1.out != p.m_a.l2.in) throw input_error("mca: MLP hidden widths differ");
}

inline FeatureMatrix mca_forward(const FeatureMatrix& f_i, const FeatureMatrix& f_a, const FeatureMatrix& f_t,
                                 const McaParams& p, McaCache* cache = nullptr) {
  check_shapes(f_i, f_a, f_t, p);
  Mlp::Cache ci, ca;
  const FeatureMatrix vi = p.m_i.forward(adaptive_mean_pool(f_i, f_t.tokens), &ci);
  const FeatureMatrix va = p.m_a.forward(adaptive_mean_pool(f_a, f_t.tokens), &ca);
  FeatureMatrix fused = vi;
  for (std::size_t k = 0; k < fused.values.size(); ++k) fused.values[k] += va.values[k];
  const FeatureMatrix zm = p.z_m.forward(fused);
  const FeatureMatrix zt = p.z_t.forward(f_t);
  FeatureMatrix out = f_t;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = zm.values[k] + (f_t.values[k] + zt.values[k]);
  if (cache) *cache = {f_i, f_a, f_t, std::move(ci), std::move(ca), std::move(fused)};
  return out;
}

struct McaGrads {
  McaParams params;
  FeatureMatrix f_i, f_a, f_t;
};

inline McaGrads mca_backward(const McaCache& c, const McaParams& p, const FeatureMatrix& upstream) {
  if (upstream.tokens != c.f_t.tokens || upstream.dim != c.f_t.dim)
    throw input_error("mca_backward: upstream gradient shape differs from f_c");
  McaGrads g{McaParams::zeros_like(p), {}, {}, {}};
  const FeatureMatrix d_fused = p.z_m.backward(c.fused, upstream, g.params.z_m);
  g.f_t = p.z_t.backward(c.f_t, upstream, g.params.z_t);
  for (std::size_t k = 0; k < g.f_t.values.size(); ++k) g.f_t.values[k] += upstream.values[k];
  g.f_i = adaptive_mean_pool_backward(p.m_i.backward(c.mi, d_fused, g.params.m_i), c.f_i.tokens);
  g.f_a = adaptive_mean_pool_backward(p.m_a.backward(c.ma, d_fused, g.params.m_a), c.f_a.tokens);
  return g;
}

inline McaGrads mca_backward(const FeatureMatrix& f_i, const FeatureMatrix& f_a, const FeatureMatrix& f_t,
                             const McaParams& p, const FeatureMatrix& upstream) {
  McaCache c;
  mca_forward(f_i, f_a, f_t, p, &c);
  return mca_backward(c, p, upstream);
}

}  // namespace dive::mca
