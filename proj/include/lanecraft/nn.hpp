#pragma once

// Transformer building blocks. Activations are token-major: a [T x C] matrix
// holds one token per row. Weights are stored [in x out] so a projection is a
// single row-major GEMM.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lanecraft/rng.hpp"
#include "lanecraft/tensor.hpp"

namespace lanecraft::nn {

template <class Real>
using ParamVisitor = std::function<void(const std::string&, BasicTensor<Real>&)>;

// Largest |row sum - 1| seen across every attention distribution computed
// while the collector is attached.
struct AttentionStats {
  double max_row_error = 0.0;
  std::size_t rows = 0;

  void record(double row_sum) {
    max_row_error = std::max(max_row_error, std::abs(row_sum - 1.0));
    ++rows;
  }
};

template <class Real>
struct Linear {
  BasicTensor<Real> weight;  // [in x out]
  BasicTensor<Real> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out) : weight({in, out}), bias({out}) {}

  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
    for (auto& w : weight.storage()) w = static_cast<Real>(rng.uniform(-bound, bound));
    for (auto& b : bias.storage()) b = static_cast<Real>(rng.uniform(-bound, bound));
  }

  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  BasicTensor<Real> operator()(const BasicTensor<Real>& x) const {
    if (x.rank() != 2 || x.dim(1) != in()) {
      throw ShapeError("linear expects [T x " + std::to_string(in()) + "], got " + shape_string(x.shape()));
    }
    BasicTensor<Real> y({x.dim(0), out()});
    lanecraft::detail::gemm(x.dim(0), out(), in(), x.ptr(), in(), weight.ptr(), out(), y.ptr(), out());
    const Real* b = bias.ptr();
    for (std::size_t t = 0; t < x.dim(0); ++t) {
      Real* row = y.ptr() + t * out();
      for (std::size_t j = 0; j < out(); ++j) row[j] += b[j];
    }
    return y;
  }
};

template <class Real>
struct LayerNorm {
  BasicTensor<Real> gain;
  BasicTensor<Real> shift;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim) : gain({dim}, Real(1)), shift({dim}) {}

  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    f(prefix + ".gain", gain);
    f(prefix + ".shift", shift);
  }

  BasicTensor<Real> operator()(const BasicTensor<Real>& x) const {
    const std::size_t d = gain.size();
    BasicTensor<Real> y(x.shape());
    for (std::size_t t = 0; t < x.dim(0); ++t) {
      const Real* in = x.ptr() + t * d;
      Real* out = y.ptr() + t * d;
      const Real mean = lanecraft::detail::sum_contiguous(in, d) / static_cast<Real>(d);
      for (std::size_t j = 0; j < d; ++j) out[j] = (in[j] - mean) * (in[j] - mean);
      const Real var = lanecraft::detail::sum_contiguous(out, d) / static_cast<Real>(d);
      const Real inv = Real(1) / std::sqrt(var + Real(1e-5));
      for (std::size_t j = 0; j < d; ++j) out[j] = (in[j] - mean) * inv * gain[j] + shift[j];
    }
    return y;
  }
};

template <class Real>
void relu_inplace(BasicTensor<Real>& x) {
  for (auto& v : x.storage()) v = v > Real(0) ? v : Real(0);
}

template <class Real>
void add_inplace(BasicTensor<Real>& x, const BasicTensor<Real>& y) {
  require_same_shape(x, y, "residual add");
  Real* a = x.ptr();
  const Real* b = y.ptr();
  for (std::size_t i = 0; i < x.size(); ++i) a[i] += b[i];
}

template <class Real>
struct Mlp {
  Linear<Real> fc1;
  Linear<Real> fc2;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out) : fc1(in, hidden), fc2(hidden, out) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }
  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }
  BasicTensor<Real> operator()(const BasicTensor<Real>& x) const {
    auto h = fc1(x);
    relu_inplace(h);
    return fc2(h);
  }
};

namespace detail {

// Copies columns [c0, c0+w) of a [rows x ld] matrix into a [w x rows] buffer.
template <class Real>
void gather_transposed(const Real* src, std::size_t rows, std::size_t ld, std::size_t row_stride,
                       std::size_t c0, std::size_t w, std::vector<Real>& dst) {
  dst.resize(w * rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* s = src + r * row_stride * ld + c0;
    for (std::size_t c = 0; c < w; ++c) dst[c * rows + r] = s[c];
  }
}

}  // namespace detail

// Scaled dot-product attention with separate query/key/value/output projections.
// Queries come from one token set, keys/values from another (the same set for
// self-attention). `width` is the attention width split across `heads`.
template <class Real>
struct MultiHeadAttention {
  Linear<Real> q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t width, std::size_t out_dim,
                     std::size_t n_heads)
      : q(query_dim, width), k(kv_dim, width), v(kv_dim, width), o(width, out_dim), heads(n_heads) {
    if (n_heads == 0 || width % n_heads != 0) {
      throw ShapeError("attention width " + std::to_string(width) + " not divisible by heads " +
                       std::to_string(n_heads));
    }
  }

  std::size_t width() const { return q.out(); }

  void init(Rng& rng) {
    q.init(rng);
    k.init(rng);
    v.init(rng);
    o.init(rng);
  }
  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    q.visit(prefix + ".q", f);
    k.visit(prefix + ".k", f);
    v.visit(prefix + ".v", f);
    o.visit(prefix + ".o", f);
  }

  // Dense attention: every query attends to every key.
  BasicTensor<Real> operator()(const BasicTensor<Real>& xq, const BasicTensor<Real>& xkv,
                               AttentionStats* stats = nullptr) const {
    const auto Q = q(xq);
    const auto K = k(xkv);
    const auto V = v(xkv);
    const std::size_t tq = xq.dim(0), tk = xkv.dim(0), A = width(), dh = A / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
    BasicTensor<Real> ctx({tq, A});
    std::vector<Real> kt, scores(tq * tk);
    for (std::size_t h = 0; h < heads; ++h) {
      detail::gather_transposed(K.ptr(), tk, A, 1, h * dh, dh, kt);
      lanecraft::detail::gemm(tq, tk, dh, Q.ptr() + h * dh, A, kt.data(), tk, scores.data(), tk);
      for (auto& s : scores) s *= scale;
      softmax_rows_inplace(scores.data(), tq, tk);
      if (stats) {
        for (std::size_t r = 0; r < tq; ++r) {
          double sum = 0;
          for (std::size_t c = 0; c < tk; ++c) sum += scores[r * tk + c];
          stats->record(sum);
        }
      }
      lanecraft::detail::gemm(tq, dh, tk, scores.data(), tk, V.ptr() + h * dh, A, ctx.ptr() + h * dh, A);
    }
    return o(ctx);
  }
};

// Self-attention over the double-edge queries with a lane/point structured key
// set: the point query (lane i, point p) attends to every point of lane i, to
// point p of every other lane, and to the trailing global queries. Global
// queries attend to all tokens. Token order: lane-major (i * points + p), then
// the globals.
template <class Real>
struct StructuredSelfAttention {
  MultiHeadAttention<Real> proj;

  StructuredSelfAttention() = default;
  StructuredSelfAttention(std::size_t dim, std::size_t n_heads) : proj(dim, dim, dim, dim, n_heads) {}

  void init(Rng& rng) { proj.init(rng); }
  void visit(const std::string& prefix, const ParamVisitor<Real>& f) { proj.visit(prefix, f); }

  BasicTensor<Real> operator()(const BasicTensor<Real>& x, std::size_t lanes, std::size_t points,
                               AttentionStats* stats = nullptr) const {
    using lanecraft::detail::gemm;
    const std::size_t nl = lanes * points;
    const std::size_t total = x.dim(0);
    if (total < nl) throw ShapeError("structured attention: fewer tokens than lane slots");
    const std::size_t ng = total - nl;
    const auto Q = proj.q(x);
    const auto K = proj.k(x);
    const auto V = proj.v(x);
    const std::size_t A = proj.width(), heads = proj.heads, dh = A / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    BasicTensor<Real> ctx({total, A});
    // Per head: intra[i][p][p'], inter[p][i][i'], glob[t][g].
    std::vector<Real> intra(lanes * points * points), inter(points * lanes * lanes), glob(nl * ng);
    std::vector<Real> kt, tmp(std::max(points, lanes) * dh), dense;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < lanes; ++i) {
        detail::gather_transposed(K.ptr() + i * points * A, points, A, 1, c0, dh, kt);
        gemm(points, points, dh, Q.ptr() + i * points * A + c0, A, kt.data(), points,
             intra.data() + i * points * points, points);
      }
      for (std::size_t p = 0; p < points; ++p) {
        detail::gather_transposed(K.ptr() + p * A, lanes, A, points, c0, dh, kt);
        gemm(lanes, lanes, dh, Q.ptr() + p * A + c0, points * A, kt.data(), lanes,
             inter.data() + p * lanes * lanes, lanes);
      }
      if (ng > 0) {
        detail::gather_transposed(K.ptr() + nl * A, ng, A, 1, c0, dh, kt);
        gemm(nl, ng, dh, Q.ptr() + c0, A, kt.data(), ng, glob.data(), ng);
      }

      // Joint softmax over the union key set of each point query; the lane's own
      // slot appears once (in the intra block).
      for (std::size_t i = 0; i < lanes; ++i) {
        for (std::size_t p = 0; p < points; ++p) {
          Real* a = intra.data() + (i * points + p) * points;
          Real* b = inter.data() + (p * lanes + i) * lanes;
          Real* g = glob.data() + (i * points + p) * ng;
          Real mx = -std::numeric_limits<Real>::infinity();
          for (std::size_t j = 0; j < points; ++j) mx = std::max(mx, a[j] * scale);
          for (std::size_t j = 0; j < lanes; ++j) {
            if (j != i) mx = std::max(mx, b[j] * scale);
          }
          for (std::size_t j = 0; j < ng; ++j) mx = std::max(mx, g[j] * scale);
          Real sum = 0;
          for (std::size_t j = 0; j < points; ++j) sum += (a[j] = lanecraft::detail::exp_of(a[j] * scale - mx));
          for (std::size_t j = 0; j < lanes; ++j) {
            b[j] = j == i ? Real(0) : lanecraft::detail::exp_of(b[j] * scale - mx);
            sum += b[j];
          }
          for (std::size_t j = 0; j < ng; ++j) sum += (g[j] = lanecraft::detail::exp_of(g[j] * scale - mx));
          const Real inv = Real(1) / sum;
          double check = 0;
          for (std::size_t j = 0; j < points; ++j) check += (a[j] *= inv);
          for (std::size_t j = 0; j < lanes; ++j) check += (b[j] *= inv);
          for (std::size_t j = 0; j < ng; ++j) check += (g[j] *= inv);
          if (stats) stats->record(check);
        }
      }

      // Weighted values, accumulated as intra + inter + global.
      for (std::size_t i = 0; i < lanes; ++i) {
        gemm(points, dh, points, intra.data() + i * points * points, points, V.ptr() + i * points * A + c0, A,
             ctx.ptr() + i * points * A + c0, A);
      }
      for (std::size_t p = 0; p < points; ++p) {
        gemm(lanes, dh, lanes, inter.data() + p * lanes * lanes, lanes, V.ptr() + p * A + c0, points * A,
             tmp.data(), dh);
        for (std::size_t i = 0; i < lanes; ++i) {
          Real* dst = ctx.ptr() + (i * points + p) * A + c0;
          for (std::size_t c = 0; c < dh; ++c) dst[c] += tmp[i * dh + c];
        }
      }
      if (ng > 0) {
        for (std::size_t t = 0; t < nl; ++t) {
          Real* dst = ctx.ptr() + t * A + c0;
          for (std::size_t j = 0; j < ng; ++j) {
            const Real w = glob[t * ng + j];
            const Real* vv = V.ptr() + (nl + j) * A + c0;
            for (std::size_t c = 0; c < dh; ++c) dst[c] += w * vv[c];
          }
        }
        // Global queries: dense over all tokens.
        dense.resize(ng * total);
        detail::gather_transposed(K.ptr(), total, A, 1, c0, dh, kt);
        gemm(ng, total, dh, Q.ptr() + nl * A + c0, A, kt.data(), total, dense.data(), total);
        for (auto& s : dense) s *= scale;
        softmax_rows_inplace(dense.data(), ng, total);
        if (stats) {
          for (std::size_t r = 0; r < ng; ++r) {
            double sum = 0;
            for (std::size_t c = 0; c < total; ++c) sum += dense[r * total + c];
            stats->record(sum);
          }
        }
        gemm(ng, dh, total, dense.data(), total, V.ptr() + c0, A, ctx.ptr() + nl * A + c0, A);
      }
    }
    return proj.o(ctx);
  }
};

template <class Real>
struct EncoderLayer {
  LayerNorm<Real> norm1, norm2;
  MultiHeadAttention<Real> attn;
  Mlp<Real> mlp;

  EncoderLayer() = default;
  EncoderLayer(std::size_t dim, std::size_t heads, std::size_t hidden)
      : norm1(dim), norm2(dim), attn(dim, dim, dim, dim, heads), mlp(dim, hidden, dim) {}

  void init(Rng& rng) {
    attn.init(rng);
    mlp.init(rng);
  }
  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    norm1.visit(prefix + ".norm1", f);
    attn.visit(prefix + ".attn", f);
    norm2.visit(prefix + ".norm2", f);
    mlp.visit(prefix + ".mlp", f);
  }

  void forward(BasicTensor<Real>& x, AttentionStats* stats) const {
    const auto n1 = norm1(x);
    add_inplace(x, attn(n1, n1, stats));
    add_inplace(x, mlp(norm2(x)));
  }
};

template <class Real>
struct DecoderLayer {
  LayerNorm<Real> norm1, norm2, norm3;
  StructuredSelfAttention<Real> self_attn;
  MultiHeadAttention<Real> cross_attn;
  Mlp<Real> mlp;

  DecoderLayer() = default;
  DecoderLayer(std::size_t dim, std::size_t heads, std::size_t hidden)
      : norm1(dim), norm2(dim), norm3(dim), self_attn(dim, heads), cross_attn(dim, dim, dim, dim, heads),
        mlp(dim, hidden, dim) {}

  void init(Rng& rng) {
    self_attn.init(rng);
    cross_attn.init(rng);
    mlp.init(rng);
  }
  void visit(const std::string& prefix, const ParamVisitor<Real>& f) {
    norm1.visit(prefix + ".norm1", f);
    self_attn.visit(prefix + ".self_attn", f);
    norm2.visit(prefix + ".norm2", f);
    cross_attn.visit(prefix + ".cross_attn", f);
    norm3.visit(prefix + ".norm3", f);
    mlp.visit(prefix + ".mlp", f);
  }

  void forward(BasicTensor<Real>& x, const BasicTensor<Real>& memory, std::size_t lanes, std::size_t points,
               AttentionStats* stats) const {
    add_inplace(x, self_attn(norm1(x), lanes, points, stats));
    add_inplace(x, cross_attn(norm2(x), memory, stats));
    add_inplace(x, mlp(norm3(x)));
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

}  // namespace lanecraft::nn
