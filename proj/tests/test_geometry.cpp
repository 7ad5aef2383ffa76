#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "bthick/errors.hpp"
#include "bthick/geometry.hpp"

namespace bthick {
namespace {

// Bisection on 2 sigmoid(u) - 1 = y, independent of the library routine.
double gtilde_inverse_oracle(double y) {
  double lo = -60.0, hi = 60.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (2.0 / (1.0 + std::exp(-mid)) - 1.0 < y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Dense midpoint sampling of the piecewise-linear interpolant.
double window_fraction_oracle(std::span<const double> g, double alpha, double beta) {
  const std::size_t sub = 4000;
  std::size_t inside = 0, total = 0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k)
    for (std::size_t j = 0; j < sub; ++j) {
      const double s = (static_cast<double>(j) + 0.5) / sub;
      const double v = g[k] + (g[k + 1] - g[k]) * s;
      inside += alpha < v && v < beta;
      ++total;
    }
  return static_cast<double>(inside) / static_cast<double>(total);
}

Vector random_profile(RngStream& rng, std::size_t n) {
  Vector g(n);
  for (double& v : g) v = rng.next_uniform(-1.0, 1.0);
  return g;
}

Segment along_w(std::span<const double> w, double half_length) {
  const double n = l2_norm(w);
  Segment s;
  s.class_i = 0;
  s.class_j = 1;
  for (double v : w) {
    s.x_r.push_back(v / n * half_length);
    s.x_s.push_back(-v / n * half_length);
  }
  return s;
}

TEST(Gtilde, InverseMatchesBisectionAndArctanh) {
  for (double y : {-0.99, -0.5, 0.0, 0.3, 0.75, 0.9, 0.999}) {
    EXPECT_NEAR(gtilde_inverse(y), gtilde_inverse_oracle(y), 1e-10);
    EXPECT_NEAR(gtilde_inverse(y), 2.0 * std::atanh(y), 1e-10);
  }
}

TEST(ClosedForm, NormFiveDefaultWindowIsLnSevenOverFive) {
  const Vector w{3.0, 4.0};
  EXPECT_NEAR(closed_form_linear_thickness(w, 0.0, 0.75), std::log(7.0) / 5.0, 1e-12);
}

TEST(ClosedForm, SegmentThicknessAgrees) {
  RngStream rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector w{rng.next_uniform(-3, 3), rng.next_uniform(-3, 3), rng.next_uniform(-3, 3)};
    const auto model = linear_logistic_model(w, 0.0);
    const auto seg = along_w(w, 10.0 / l2_norm(w));
    for (auto [a, b] : {std::pair{0.0, 0.75}, {-0.5, 0.5}, {0.0, 0.9}}) {
      const double expected = closed_form_linear_thickness(w, a, b);
      EXPECT_NEAR(segment_thickness(model, seg, a, b, 128) / expected, 1.0, 5e-3);
    }
  }
}

TEST(WindowFraction, InterpolatedMatchesDenseSampling) {
  RngStream rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_profile(rng, 2 + rng.next_index(30));
    const double a = rng.next_uniform(-1.0, 0.5);
    const double b = a + rng.next_uniform(0.05, 1.0);
    EXPECT_NEAR(window_fraction(g, a, b, Quadrature::kInterpolated), window_fraction_oracle(g, a, b), 1e-3);
  }
}

TEST(WindowFraction, PointCountRule) {
  const Vector g{0.5, 0.1, 0.2, -0.3, 0.9, 0.5};
  // Interior points 0.1 and 0.2 lie in (0, 0.75); 0.9 and -0.3 do not.
  EXPECT_DOUBLE_EQ(window_fraction(g, 0.0, 0.75, Quadrature::kPointCount), 2.0 / 5.0);
  // Strict inequality at the window edge.
  const Vector edge{0.0, 0.0, 0.75, 0.0};
  EXPECT_EQ(window_fraction(edge, 0.0, 0.75, Quadrature::kPointCount), 0.0);
}

TEST(WindowFraction, WideningTheWindowNeverShrinksIt) {
  RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = random_profile(rng, 2 + rng.next_index(40));
    const double a = rng.next_uniform(-1.0, 0.5);
    const double b = a + rng.next_uniform(0.01, 1.0);
    const double a2 = a - rng.next_uniform(0.0, 0.5);
    const double b2 = b + rng.next_uniform(0.0, 0.5);
    for (auto rule : {Quadrature::kInterpolated, Quadrature::kPointCount}) {
      const double inner = window_fraction(g, a, b, rule);
      const double outer = window_fraction(g, a2, b2, rule);
      EXPECT_GE(outer, inner);
      EXPECT_GE(inner, 0.0);
      EXPECT_LE(outer, 1.0);
    }
  }
}

TEST(Thickness, PerSegmentBoundedByLength) {
  RngStream rng(8);
  const auto model = MlpModel::he_init(residual_mlp_specs(3, 8, 3, 2), rng);
  for (int trial = 0; trial < 50; ++trial) {
    Segment s;
    s.x_r = {rng.next_normal(), rng.next_normal(), rng.next_normal()};
    s.x_s = {rng.next_normal(), rng.next_normal(), rng.next_normal()};
    s.class_i = 0;
    s.class_j = 1;
    const double t = segment_thickness(model, s, -1.0, 1.0, 64);
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, s.length() * (1 + 1e-12));
  }
}

Dataset blobs_2d() { return gaussian_blobs({{-2.0, -1.0}, {2.0, 1.0}}, 0.4, 40, 11); }

TEST(Thickness, MeasurementIsDeterministicAndThreadIndependent) {
  const auto data = gaussian_blobs({{-1.0, 0.0}, {1.0, 0.0}}, 0.3, 30, 1);
  const auto model = linear_logistic_model(Vector{-2.0, 0.3}, 0.1);
  ThicknessSpec spec;
  spec.num_segments = 40;
  spec.seed = 3;
  spec.threads = 1;
  const auto a = measure_thickness(model, data, spec);
  spec.threads = 4;
  const auto b = measure_thickness(model, data, spec);
  EXPECT_EQ(a.per_segment, b.per_segment);
  EXPECT_EQ(a.mean_thickness, b.mean_thickness);
  EXPECT_EQ(a.per_segment.size() + a.skipped_segments, 40u);
  spec.sampler = RandomPairSampler{};
  const auto pairs = measure_thickness(model, data, spec);
  EXPECT_EQ(pairs.skipped_segments, 0u);
  EXPECT_GT(pairs.mean_thickness, 0.0);
}

TEST(Thickness, AllSkippedIsAMeasurementError) {
  const auto data = gaussian_blobs({{-5.0, 0.0}, {5.0, 0.0}}, 0.1, 10, 1);
  const auto model = linear_logistic_model(Vector{-4.0, 0.0}, 0.0);
  ThicknessSpec spec;
  spec.num_segments = 10;
  try {
    measure_thickness(model, data, spec);
    FAIL();
  } catch (const MeasurementError& e) {
    EXPECT_EQ(e.skipped(), 10u);
  }
}

TEST(Thickness, RejectsInvalidSpec) {
  ThicknessSpec spec;
  spec.alpha = 0.8;
  EXPECT_THROW(spec.validate(), ContractViolation);
  spec = ThicknessSpec{};
  spec.integration_points = 1;
  EXPECT_THROW(spec.validate(), ContractViolation);
}

TEST(Margin, CrossingDistanceOnLinearModel) {
  const Vector w{1.0, 2.0};
  const auto model = linear_logistic_model(w, 0.5);
  Segment s;
  s.x_r = {3.0, 1.0};
  s.x_s = {-3.0, -2.0};
  s.class_i = 0;
  s.class_j = 1;
  // Zero of w.x + 0.5 on x_r + t (x_s - x_r): 5.5 - 12 t = 0.
  const double t = 5.5 / 12.0;
  EXPECT_NEAR(crossing_distance(model, s), t * s.length(), 1e-6 * s.length());
}

TEST(Margin, WorstMarginOnLinearModelMatchesDistanceFormula) {
  const auto data = gaussian_blobs({{3.0, 0.0}, {-3.0, 0.0}}, 0.5, 50, 7);
  const Vector w{2.0, 0.5};
  const double b = -0.2;
  const auto model = linear_logistic_model(w, b);
  const AttackConfig attack{Norm::kL2, 10.0, 0.5, 40, std::nullopt, false};
  const auto details = margin_details(model, data, attack, MarginMode::kWorst);
  double oracle[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const auto predicted = predict_labels(model, data.x);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const double d = std::abs(w[0] * data.x(r, 0) + w[1] * data.x(r, 1) + b) / l2_norm(w);
    oracle[predicted[r]] = std::min(oracle[predicted[r]], d);
  }
  EXPECT_NEAR(details.value, std::min(oracle[0], oracle[1]), 1e-5);
  EXPECT_NEAR(two_sided_worst_margin(details, 0, 1), oracle[0] + oracle[1], 1e-5);
}

TEST(Tilting, OneDimensionalDataHasUnitCosine) {
  const auto data = gaussian_blobs({{-1.0}, {1.0}}, 0.3, 20, 2);
  const auto model = linear_logistic_model(Vector{-3.0}, 0.0);
  RngStream rng(1);
  EXPECT_NEAR(tilting_cosine(model, data, 50, rng), 1.0, 1e-12);
}

TEST(Tilting, CosineInUnitInterval) {
  const auto data = blobs_2d();
  RngStream init(4);
  const auto model = MlpModel::he_init(residual_mlp_specs(2, 8, 3, 2), init);
  RngStream rng(1);
  const double c = tilting_cosine(model, data, 50, rng);
  EXPECT_GE(c, 0.0);
  EXPECT_LE(c, 1.0);
}

TEST(HardSvm, SymmetricPairHasKnownSolution) {
  Dataset d;
  d.x = Matrix{{1.0, 1.0}, {-1.0, -1.0}, {2.0, 3.0}, {-3.0, -1.5}};
  d.y = {1, 0, 1, 0};
  d.num_classes = 2;
  const auto svm = hard_svm_2d(d);
  EXPECT_NEAR(svm.w[0], 0.5, 1e-6);
  EXPECT_NEAR(svm.w[1], 0.5, 1e-6);
  EXPECT_NEAR(svm.norm, std::sqrt(0.5), 1e-9);
}

TEST(HardSvm, WorstTiltingIsOneAtTheSvmNormAndNonIncreasing) {
  const auto data = blobs_2d();
  const auto svm = hard_svm_2d(data);
  EXPECT_NEAR(worst_case_tilting_2d(data, svm.norm, 3600), 1.0, 1e-3);
  double prev = 1.0;
  for (double m : {1.5, 2.0, 4.0}) {
    const double t = worst_case_tilting_2d(data, m * svm.norm, 3600);
    EXPECT_LE(t, prev + 1e-3);
    prev = t;
  }
}

TEST(HardSvm, NonSeparableDataIsInfeasible) {
  Dataset d;
  d.x = Matrix{{1.0, 0.0}, {2.0, 0.0}};
  d.y = {1, 0};
  d.num_classes = 2;
  EXPECT_THROW(hard_svm_2d(d), InfeasibleError);
}

TEST(Minimax, LinearProfileAttainsTheBound) {
  Vector h(2049);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = -1.0 + 2.0 * static_cast<double>(k) / (h.size() - 1);
  const double cell = 1.0 / (h.size() - 1);
  for (std::size_t c : {2, 4, 8}) EXPECT_NEAR(minimax_1d_check(h, c), 1.0 / (2.0 * c), cell);
}

TEST(Minimax, NeverExceedsTheBound) {
  RngStream rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    Vector h(1025);
    for (double& v : h) v = rng.next_uniform(-1.0, 1.0);
    std::sort(h.begin(), h.end());
    const double cell = 1.0 / (h.size() - 1);
    for (std::size_t c : {2, 4, 8}) EXPECT_LE(minimax_1d_check(h, c), 1.0 / (2.0 * c) + cell);
  }
}

}  // namespace
}  // namespace bthick
