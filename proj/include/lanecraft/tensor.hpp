#pragma once

// Dense row-major tensors and the handful of kernels the network, fusion and
// losses need. Every kernel is a pure function of its inputs.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace lanecraft {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <class Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Real fill = Real(0)) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_numel(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* ptr() { return data_.data(); }
  const Real* ptr() const { return data_.data(); }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  Real& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Real operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  template <class Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  void check_shape() const {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<double>;

namespace detail {

template <class Real>
struct Simd {
  static constexpr int lanes = 64 / static_cast<int>(sizeof(Real));
  typedef Real type __attribute__((vector_size(64)));
};

// One packed column panel: rows in blocks of MR, NVC vectors of columns.
template <class Real, std::size_t NVC, std::size_t NV>
void gemm_panel(std::size_t m, std::size_t k, const Real* a, std::size_t lda,
                const typename Simd<Real>::type* panel, Real* c, std::size_t ldc, std::size_t w) {
  using V = typename Simd<Real>::type;
  constexpr std::size_t MR = NVC >= 3 ? 6 : 8;
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    V acc[MR][NVC] = {};
    const Real* ar[MR];
    for (std::size_t r = 0; r < MR; ++r) ar[r] = a + (i + r) * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const V* bk = panel + p * NV;
#pragma GCC unroll 8
      for (std::size_t r = 0; r < MR; ++r) {
        const V av = V{} + ar[r][p];
#pragma GCC unroll 4
        for (std::size_t q = 0; q < NVC; ++q) acc[r][q] += av * bk[q];
      }
    }
    for (std::size_t r = 0; r < MR; ++r) std::memcpy(c + (i + r) * ldc, acc[r], w * sizeof(Real));
  }
  for (; i < m; ++i) {
    V acc[NVC] = {};
    const Real* ar = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const V* bk = panel + p * NV;
      const V av = V{} + ar[p];
      for (std::size_t q = 0; q < NVC; ++q) acc[q] += av * bk[q];
    }
    std::memcpy(c + i * ldc, acc, w * sizeof(Real));
  }
}

// C[m x n] = A[m x k] * B[k x n]; every C element accumulates its k products in
// ascending order starting from zero. B is packed into zero-padded column panels.
template <class Real>
void gemm(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
          const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  using V = typename Simd<Real>::type;
  constexpr std::size_t W = Simd<Real>::lanes;
  constexpr std::size_t NV = 4;
  constexpr std::size_t NR = NV * W;

  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, Real(0));
    return;
  }
  const std::size_t panels = (n + NR - 1) / NR;
  thread_local std::vector<V> packed;
  packed.assign(panels * NV * k, V{});
  Real* pk = reinterpret_cast<Real*>(packed.data());
  for (std::size_t jb = 0; jb < panels; ++jb) {
    const std::size_t j0 = jb * NR;
    const std::size_t w = std::min(NR, n - j0);
    for (std::size_t p = 0; p < k; ++p) {
      std::memcpy(pk + (jb * k + p) * NR, b + p * ldb + j0, w * sizeof(Real));
    }
  }

  for (std::size_t jb = 0; jb < panels; ++jb) {
    const V* panel = packed.data() + jb * k * NV;
    const std::size_t j0 = jb * NR;
    const std::size_t w = std::min(NR, n - j0);
    // Narrow trailing panels only touch the vectors that hold real columns.
    switch ((w + W - 1) / W) {
      case 1: gemm_panel<Real, 1, NV>(m, k, a, lda, panel, c + j0, ldc, w); break;
      case 2: gemm_panel<Real, 2, NV>(m, k, a, lda, panel, c + j0, ldc, w); break;
      case 3: gemm_panel<Real, 3, NV>(m, k, a, lda, panel, c + j0, ldc, w); break;
      default: gemm_panel<Real, 4, NV>(m, k, a, lda, panel, c + j0, ldc, w); break;
    }
  }
}

}  // namespace detail

template <class Real>
BasicTensor<Real> matmul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  BasicTensor<Real> c({a.dim(0), b.dim(1)});
  detail::gemm(a.dim(0), b.dim(1), a.dim(1), a.ptr(), a.dim(1), b.ptr(), b.dim(1), c.ptr(), b.dim(1));
  return c;
}

template <class Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& t, Shape new_shape) {
  if (shape_numel(new_shape) != t.size()) {
    throw ShapeError("reshape size mismatch: " + shape_string(t.shape()) + " -> " +
                     shape_string(new_shape));
  }
  return BasicTensor<Real>(std::move(new_shape), t.storage());
}

template <class Real>
BasicTensor<Real> transpose(const BasicTensor<Real>& t) {
  if (t.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_string(t.shape()));
  const std::size_t r = t.dim(0), c = t.dim(1);
  BasicTensor<Real> out({c, r});
  constexpr std::size_t B = 32;
  for (std::size_t i0 = 0; i0 < r; i0 += B) {
    for (std::size_t j0 = 0; j0 < c; j0 += B) {
      for (std::size_t i = i0; i < std::min(r, i0 + B); ++i) {
        for (std::size_t j = j0; j < std::min(c, j0 + B); ++j) out[j * r + i] = t[i * c + j];
      }
    }
  }
  return out;
}

// out.shape[d] = t.shape[perm[d]].
template <class Real>
BasicTensor<Real> transpose(const BasicTensor<Real>& t, const std::vector<std::size_t>& perm) {
  const std::size_t n = t.rank();
  std::vector<bool> seen(n, false);
  bool ok = perm.size() == n;
  for (auto p : perm) {
    if (!ok || p >= n || seen[p]) {
      ok = false;
      break;
    }
    seen[p] = true;
  }
  if (!ok) throw ShapeError("invalid permutation for shape " + shape_string(t.shape()));
  if (n == 2 && perm[0] == 1) return transpose(t);

  Shape out_shape(n);
  for (std::size_t d = 0; d < n; ++d) out_shape[d] = t.dim(perm[d]);
  std::vector<std::size_t> in_strides(n, 1);
  for (std::size_t d = n - 1; d > 0; --d) in_strides[d - 1] = in_strides[d] * t.dim(d);

  BasicTensor<Real> out(out_shape);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < n; ++d) src += idx[d] * in_strides[perm[d]];
    out[flat] = t[src];
    for (std::size_t d = n; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

namespace detail {

// Branch-free expf (Cephes range reduction + degree-6 polynomial, ~2 ulp) so
// that the softmax loops vectorize; std::exp stays in use for double.
inline float exp_fast(float x) {
  x = std::min(std::max(x, -87.0f), 88.0f);
  const float n = std::floor(x * 1.44269504088896341f + 0.5f);
  const float r = x - n * 0.693359375f + n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  return p * std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23);
}

template <class Real>
inline Real exp_of(Real x) {
  if constexpr (std::is_same_v<Real, float>) {
    return exp_fast(x);
  } else {
    return std::exp(x);
  }
}

// Sum with 16 interleaved partials: vectorizable yet independent of the
// target's vector width, so results match across builds.
template <class Real>
Real sum_contiguous(const Real* x, std::size_t n) {
  Real acc[16] = {};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    for (std::size_t k = 0; k < 16; ++k) acc[k] += x[i + k];
  }
  for (std::size_t k = 0; i < n; ++i, ++k) acc[k] += x[i];
  Real s = 0;
  for (Real a : acc) s += a;
  return s;
}

template <class Real>
void softmax_strided(Real* x, std::size_t len, std::size_t stride) {
  Real mx = x[0];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[i * stride]);
  if (stride == 1) {
    for (std::size_t i = 0; i < len; ++i) x[i] = exp_of(x[i] - mx);
    const Real inv = Real(1) / sum_contiguous(x, len);
    for (std::size_t i = 0; i < len; ++i) x[i] *= inv;
    return;
  }
  Real sum = 0;
  for (std::size_t i = 0; i < len; ++i) {
    x[i * stride] = exp_of(x[i * stride] - mx);
    sum += x[i * stride];
  }
  const Real inv = Real(1) / sum;
  for (std::size_t i = 0; i < len; ++i) x[i * stride] *= inv;
}
}  // namespace detail

template <class Real>
void softmax_rows_inplace(Real* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) detail::softmax_strided(x + r * cols, cols, std::size_t{1});
}

template <class Real>
BasicTensor<Real> softmax(const BasicTensor<Real>& t, std::size_t axis) {
  if (axis >= t.rank()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " +
                     shape_string(t.shape()));
  }
  BasicTensor<Real> out = t;
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < t.rank(); ++d) inner *= t.dim(d);
  const std::size_t len = t.dim(axis);
  const std::size_t outer = t.size() / (inner * len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      detail::softmax_strided(out.ptr() + o * len * inner + i, len, inner);
    }
  }
  return out;
}

// Fixed sinusoidal encoding of an h x w token grid, shape [dim x h*w], column
// index = row * w + col. Channels [0, dim/2) encode the column (x) index and
// [dim/2, dim) the row (y) index; inside each half, channel 2i holds
// sin(pos / 10000^(2i/half)) and 2i+1 the matching cos.
template <class Real = double>
BasicTensor<Real> sinusoidal_pe(std::size_t h, std::size_t w, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) {
    throw ShapeError("positional encoding dim must be a positive multiple of 4, got " + std::to_string(dim));
  }
  const std::size_t half = dim / 2;
  BasicTensor<Real> pe({dim, h * w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t col = r * w + c;
      for (std::size_t i = 0; i < half; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        const double ax = static_cast<double>(c) * freq;
        const double ay = static_cast<double>(r) * freq;
        pe(i, col) = static_cast<Real>(std::sin(ax));
        pe(i + 1, col) = static_cast<Real>(std::cos(ax));
        pe(half + i, col) = static_cast<Real>(std::sin(ay));
        pe(half + i + 1, col) = static_cast<Real>(std::cos(ay));
      }
    }
  }
  return pe;
}

template <class Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class Real>
BasicTensor<Real> operator+(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<Real> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class Real>
BasicTensor<Real> operator*(const BasicTensor<Real>& a, Real s) {
  BasicTensor<Real> out = a;
  for (auto& v : out.storage()) v *= s;
  return out;
}

template <class Real>
Real max_abs_diff(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_same_shape(a, b, "max_abs_diff");
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace lanecraft
