#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lanecraft/tensor.hpp"
#include "support/oracles.hpp"

using namespace lanecraft;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_TRUE(t.all_finite());
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor I({2, 2}, {1, 0, 0, 1});
  const Tensor A({2, 2}, {0.3, -2, 7, 1e-3});
  EXPECT_EQ(matmul(I, A), A);
  EXPECT_EQ(matmul(A, I), A);
}

TEST(Matmul, HandExample) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {1, 1});
  EXPECT_EQ(matmul(a, b), Tensor({2, 1}, {3, 7}));
}

TEST(Matmul, MatchesNaiveOracleExactly) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_tensor(rng, {8, 8}), b = random_tensor(rng, {8, 8});
    EXPECT_EQ(matmul(a, b), oracle::matmul(a, b));
  }
}

TEST(Matmul, IntegerInputsExactAcrossOddShapes) {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 40));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 70));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 90));
    Tensor a({m, k}), b({k, n});
    for (auto& v : a.storage()) v = rng.uniform_int(-9, 9);
    for (auto& v : b.storage()) v = rng.uniform_int(-9, 9);
    EXPECT_EQ(matmul(a, b), oracle::matmul(a, b)) << m << "x" << k << "x" << n;
  }
}

TEST(Matmul, FloatKernelAgreesWithDouble) {
  Rng rng(5);
  const auto a = random_tensor(rng, {37, 53}), b = random_tensor(rng, {53, 71});
  const auto ref = oracle::matmul(a, b);
  const auto got = matmul(a.cast<float>(), b.cast<float>());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-4);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformRow) {
  const auto s = softmax(Tensor({1, 3}, {2.5, 2.5, 2.5}), 1);
  for (double v : s.storage()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoClosedForm) {
  const auto s = softmax(Tensor({2}, {0.0, std::numbers::ln2}), 0);
  EXPECT_NEAR(s[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, WideSpreadDoesNotOverflow) {
  const std::vector<double> row{-1e4, 0.0, 1e4, 1e4 - 1.0, 5e3};
  const auto s = softmax(Tensor({1, 5}, row), 1);
  const auto ref = oracle::softmax(row);
  double sum = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    ASSERT_TRUE(std::isfinite(s[i]));
    EXPECT_NEAR(s[i], static_cast<double>(ref[i]), 1e-12);
    sum += s[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Softmax, FloatPathMatchesHighPrecision) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> row(static_cast<std::size_t>(rng.uniform_int(1, 300)));
    for (auto& v : row) v = rng.uniform(-60, 60);
    BasicTensor<float> x({1, row.size()});
    for (std::size_t i = 0; i < row.size(); ++i) x[i] = static_cast<float>(row[i]);
    const auto s = softmax(x, 1);
    const auto ref = oracle::softmax(std::vector<double>(x.storage().begin(), x.storage().end()));
    double sum = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      EXPECT_NEAR(s[i], static_cast<double>(ref[i]), 1e-6);
      sum += s[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Softmax, SumsToOneAlongEveryAxisAndIgnoresShift) {
  Rng rng(9);
  const auto t = random_tensor(rng, {3, 4, 5}, -5, 5);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto s = softmax(t, axis);
    Tensor shifted = t;
    // Same constant along the axis, different across the other axes.
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
          const std::size_t idx[3] = {i, j, k};
          double c = 0;
          for (std::size_t d = 0; d < 3; ++d) c += d == axis ? 0.0 : 0.7 * static_cast<double>(idx[d] + 1);
          shifted(i, j, k) += c;
        }
    EXPECT_LT(max_abs_diff(s, softmax(shifted, axis)), 1e-6);
    const auto perm_sum = [&](std::size_t a, std::size_t b) {
      double sum = 0;
      for (std::size_t x = 0; x < t.dim(axis); ++x) {
        std::size_t idx[3];
        std::size_t o = 0;
        for (std::size_t d = 0; d < 3; ++d) idx[d] = d == axis ? x : (o++ == 0 ? a : b);
        sum += s(idx[0], idx[1], idx[2]);
      }
      return sum;
    };
    const std::size_t d1 = axis == 0 ? 4 : 3, d2 = axis == 2 ? 4 : 5;
    for (std::size_t a = 0; a < d1; ++a)
      for (std::size_t b = 0; b < d2; ++b) EXPECT_NEAR(perm_sum(a, b), 1.0, 1e-6);
    for (double v : s.storage()) EXPECT_GT(v, 0.0);
  }
  EXPECT_THROW(softmax(t, 3), ShapeError);
}

TEST(Reshape, RowMajorLaw) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto r = reshape(t, {3, 2});
  EXPECT_EQ(r, Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  EXPECT_DOUBLE_EQ(r(2, 0), 5);
  EXPECT_THROW(reshape(t, {4, 2}), ShapeError);
}

TEST(Reshape, LaneGridRoundTrip) {
  Rng rng(10);
  const auto t = random_tensor(rng, {16, 3, 4});
  EXPECT_EQ(reshape(reshape(t, {16, 12}), {16, 3, 4}), t);
}

TEST(Transpose, InvolutionAndPermutations) {
  Rng rng(12);
  const auto t = random_tensor(rng, {5, 7});
  EXPECT_EQ(transpose(transpose(t)), t);
  EXPECT_DOUBLE_EQ(transpose(t)(6, 4), t(4, 6));

  const auto u = random_tensor(rng, {2, 3, 4});
  const auto p = transpose(u, {2, 0, 1});
  EXPECT_EQ(p.shape(), (Shape{4, 2, 3}));
  EXPECT_DOUBLE_EQ(p(3, 1, 2), u(1, 2, 3));
  EXPECT_EQ(transpose(p, {1, 2, 0}), u);
  auto a = u.storage(), b = p.storage();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_THROW(transpose(u, {0, 0, 1}), ShapeError);
  EXPECT_THROW(transpose(u, {0, 1}), ShapeError);
}

TEST(PositionalEncoding, OriginIsSinZeroCosOne) {
  const auto pe = sinusoidal_pe(7, 7, 16);
  ASSERT_EQ(pe.shape(), (Shape{16, 49}));
  for (std::size_t c = 0; c < 16; c += 2) {
    EXPECT_EQ(pe(c, 0), 0.0);
    EXPECT_EQ(pe(c + 1, 0), 1.0);
  }
}

TEST(PositionalEncoding, BoundedDeterministicDistinct) {
  const auto pe = sinusoidal_pe(7, 7, 256);
  for (double v : pe.storage()) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_EQ(pe, sinusoidal_pe(7, 7, 256));
  for (std::size_t a = 0; a < 49; ++a) {
    for (std::size_t b = a + 1; b < 49; ++b) {
      double d = 0;
      for (std::size_t e = 0; e < 256; ++e) d = std::max(d, std::abs(pe(e, a) - pe(e, b)));
      EXPECT_GT(d, 1e-3) << a << " vs " << b;
    }
  }
  // (0,0) vs (1,0): column index 1 is grid position row 0, col 1.
  double d = 0;
  for (std::size_t e = 0; e < 256; ++e) d = std::max(d, std::abs(pe(e, 0) - pe(e, 1)));
  EXPECT_GT(d, 1e-3);
}

TEST(PositionalEncoding, DimMustBeMultipleOfFour) {
  EXPECT_THROW(sinusoidal_pe(2, 2, 6), ShapeError);
  EXPECT_THROW(sinusoidal_pe(2, 2, 0), ShapeError);
}
