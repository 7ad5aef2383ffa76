#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bthick/errors.hpp"
#include "bthick/numerics.hpp"

namespace bthick {
namespace {

// Textbook triple loop, the reference for the blocked kernels.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a.values()[k], y = b.values()[k];
    worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::max(std::abs(x), std::abs(y))));
  }
  return worst;
}

TEST(Matrix, MatmulMatchesNaiveProduct) {
  RngStream rng(3);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_index(40), k = 1 + rng.next_index(40), n = 1 + rng.next_index(40);
    const Matrix a = normal(rng, m, k, 0.0, 1.0);
    const Matrix b = normal(rng, k, n, 0.0, 1.0);
    EXPECT_LT(max_rel_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
    EXPECT_LT(max_rel_diff(matmul_bt(a, b.transposed()), naive_matmul(a, b)), 1e-12);
    EXPECT_LT(max_rel_diff(matmul_at(a.transposed(), b), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matrix, MatmulIsAssociative) {
  RngStream rng(5);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_index(12), k = 1 + rng.next_index(12), p = 1 + rng.next_index(12),
                      n = 1 + rng.next_index(12);
    const Matrix a = normal(rng, m, k, 0.0, 1.0);
    const Matrix b = normal(rng, k, p, 0.0, 1.0);
    const Matrix c = normal(rng, p, n, 0.0, 1.0);
    EXPECT_LT(max_rel_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Matrix, MatmulRejectsMismatchedShapes) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ContractViolation);
}

TEST(Matrix, TransposeAndIdentity) {
  const Matrix a{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(a.transposed().transposed(), a);
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
  EXPECT_EQ(a.transposed()(2, 1), 6.0);
}

TEST(Softmax, RowsSumToOneForExtremeLogits) {
  RngStream rng(11);
  Matrix logits = normal(rng, 50, 7, 0.0, 300.0);
  logits(0, 0) = 1e300;
  logits(1, 3) = -1e300;
  const Matrix p = softmax_rows(logits);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Softmax, MatchesDirectFormulaOnModerateLogits) {
  RngStream rng(12);
  const Matrix logits = normal(rng, 10, 5, 0.0, 2.0);
  const Matrix p = softmax_rows(logits);
  for (std::size_t r = 0; r < 10; ++r) {
    double z = 0.0;
    for (double v : logits.row(r)) z += std::exp(v);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(p(r, c), std::exp(logits(r, c)) / z, 1e-14);
  }
}

TEST(Argmax, TiesGoToLowestIndex) {
  const Vector v{1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(Rng, StreamReplaysIdentically) {
  RngStream a(42), b(42);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(a.counter(), 1000u);
}

TEST(Rng, ChildrenAreDistinctAndReproducible) {
  const RngStream root(9);
  EXPECT_EQ(root.child(3).seed(), root.child(3).seed());
  EXPECT_NE(root.child(3).seed(), root.child(4).seed());
  EXPECT_NE(root.child(3).seed(), RngStream(10).child(3).seed());
}

TEST(Rng, UniformMomentsAndRange) {
  RngStream rng(1);
  const std::size_t n = 200000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.next_unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  RngStream rng(2);
  const std::size_t n = 200000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = rng.next_normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
}

TEST(Rng, BetaMeanAndVariance) {
  for (double a : {0.2, 1.0, 2.0}) {
    RngStream rng(4);
    const std::size_t n = 100000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double v = rng.next_beta(a, a);
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.5, 0.01) << a;
    EXPECT_NEAR(sq / n - mean * mean, 1.0 / (4.0 * (2.0 * a + 1.0)), 0.005) << a;
  }
}

TEST(Rng, NextIndexIsUniform) {
  RngStream rng(6);
  std::vector<std::size_t> counts(7, 0);
  const std::size_t n = 70000;
  for (std::size_t k = 0; k < n; ++k) ++counts[rng.next_index(7)];
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 7.0, 0.01);
}

TEST(Rng, PermutationIsABijection) {
  RngStream rng(8);
  auto p = permutation(rng, 100);
  std::sort(p.begin(), p.end());
  std::vector<std::size_t> expected(100);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(p, expected);
}

TEST(ParallelFor, ResultsIndependentOfWorkerCount) {
  auto run = [](unsigned threads) {
    std::vector<double> out(257);
    parallel_for(out.size(), threads, [&](std::size_t i) {
      RngStream rng = RngStream(77).child(i);
      out[i] = rng.next_normal();
    });
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

}  // namespace
}  // namespace bthick
