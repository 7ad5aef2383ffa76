#include <gtest/gtest.h>

#include <cmath>

#include "bthick/svm.hpp"

namespace bthick {
namespace {

TEST(Svm, SymmetricDataRecoversMaxMarginDirection) {
  Dataset d;
  d.x = Matrix{{1.0, 1.0}, {-1.0, -1.0}, {2.0, 3.0}, {-3.0, -1.5}, {4.0, 0.5}, {-0.5, -4.0}};
  d.y = {1, 0, 1, 0, 1, 0};
  d.num_classes = 2;
  const auto svm = fit_linear_svm(d);
  EXPECT_NEAR(svm.w[0], 0.5, 1e-4);
  EXPECT_NEAR(svm.w[1], 0.5, 1e-4);
  EXPECT_NEAR(svm.b, 0.0, 1e-4);
}

TEST(Svm, SeparatesBlobsWithUnitFunctionalMargin) {
  const auto d = gaussian_blobs({{-3.0, 0.5}, {3.0, -0.5}}, 0.5, 100, 7);
  const auto svm = fit_linear_svm(d);
  double tightest = 1e300;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const double sign = d.y[r] == 1 ? 1.0 : -1.0;
    const double f = sign * (svm.w[0] * d.x(r, 0) + svm.w[1] * d.x(r, 1) + svm.b);
    EXPECT_GE(f, 1.0 - 1e-4);
    tightest = std::min(tightest, f);
  }
  EXPECT_NEAR(tightest, 1.0, 1e-4);
}

TEST(Svm, IsDeterministic) {
  const auto d = gaussian_blobs({{-2.0, 0.0}, {2.0, 0.0}}, 0.5, 50, 3);
  const auto a = fit_linear_svm(d), b = fit_linear_svm(d);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.b, b.b);
}

}  // namespace
}  // namespace bthick
