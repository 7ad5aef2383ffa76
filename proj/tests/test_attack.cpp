#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bthick/attack.hpp"
#include "bthick/errors.hpp"

namespace bthick {
namespace {

struct Fixture {
  MlpModel model;
  Matrix x;
  std::vector<std::size_t> y;
};

Fixture fixture(std::uint64_t seed, std::size_t n = 40) {
  RngStream rng(seed);
  Fixture f{MlpModel::he_init(residual_mlp_specs(6, 12, 3, 3), rng), normal(rng, n, 6, 0.0, 1.0), {}};
  for (std::size_t k = 0; k < n; ++k) f.y.push_back(rng.next_index(3));
  return f;
}

double ce(const MlpModel& m, std::span<const double> x, std::size_t cls) {
  return evaluate_scalar(m, x, LossVsOneHot{cls});
}

double linf(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  return worst;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

TEST(Pgd, StaysInsideTheBall) {
  for (Norm norm : {Norm::kL2, Norm::kLinf}) {
    for (bool random_start : {false, true}) {
      const auto f = fixture(1);
      AttackConfig cfg{norm, norm == Norm::kL2 ? 1.0 : 0.1, norm == Norm::kL2 ? 0.2 : 0.02, 20, std::nullopt,
                       random_start};
      RngStream rng(2);
      for (std::size_t r = 0; r < f.x.rows(); ++r) {
        const auto res = pgd(f.model, f.x.row(r), f.y[r], cfg, rng);
        const double d = norm == Norm::kL2 ? l2(res.x_adv, f.x.row(r)) : linf(res.x_adv, f.x.row(r));
        EXPECT_LE(d, cfg.epsilon + 1e-9);
      }
    }
  }
}

TEST(Pgd, IsDeterministic) {
  const auto f = fixture(3);
  const AttackConfig cfg{Norm::kL2, 1.0, 0.2, 20, std::nullopt, true};
  for (std::size_t r = 0; r < 5; ++r) {
    RngStream a(9), b(9);
    EXPECT_EQ(pgd(f.model, f.x.row(r), f.y[r], cfg, a).x_adv, pgd(f.model, f.x.row(r), f.y[r], cfg, b).x_adv);
  }
}

TEST(Pgd, MoreStepsFindHigherLoss) {
  const auto f = fixture(4, 100);
  AttackConfig one{Norm::kL2, 1.0, 0.2, 1, std::nullopt, false};
  AttackConfig twenty = one;
  twenty.steps = 20;
  double loss1 = 0.0, loss20 = 0.0;
  RngStream rng(0);
  for (std::size_t r = 0; r < f.x.rows(); ++r) {
    loss1 += ce(f.model, pgd(f.model, f.x.row(r), f.y[r], one, rng).x_adv, f.y[r]);
    loss20 += ce(f.model, pgd(f.model, f.x.row(r), f.y[r], twenty, rng).x_adv, f.y[r]);
  }
  EXPECT_GE(loss20, loss1);
}

TEST(Pgd, TargetedAttackLowersTargetLoss) {
  const auto f = fixture(5);
  RngStream rng(0);
  for (std::size_t r = 0; r < 10; ++r) {
    const std::size_t target = (f.y[r] + 1) % 3;
    AttackConfig cfg{Norm::kL2, 1.0, 0.2, 20, target, false};
    const auto res = pgd(f.model, f.x.row(r), f.y[r], cfg, rng);
    EXPECT_LE(ce(f.model, res.x_adv, target), ce(f.model, f.x.row(r), target) + 1e-12);
  }
}

TEST(Pgd, L2StepHasFixedLength) {
  const auto f = fixture(6);
  RngStream rng(0);
  const AttackConfig cfg{Norm::kL2, 10.0, 0.2, 1, std::nullopt, false};
  const auto res = pgd(f.model, f.x.row(0), f.y[0], cfg, rng);
  EXPECT_NEAR(l2(res.x_adv, f.x.row(0)), 0.2, 1e-12);
}

TEST(Pgd, ZeroGradientIsFlaggedAndLeavesInputUnchanged) {
  MlpModel model({{2, 2, Activation::kIdentity, false}});  // all-zero parameters
  RngStream rng(0);
  const Vector x{0.3, -0.7};
  const auto res = pgd(model, x, 0, AttackConfig{}, rng);
  EXPECT_TRUE(res.degenerate);
  EXPECT_EQ(res.x_adv, x);
}

TEST(Pgd, ClampsToBounds) {
  const auto f = fixture(7);
  RngStream rng(0);
  const AttackConfig cfg{Norm::kLinf, 0.5, 0.1, 10, std::nullopt, true};
  const Bounds bounds = std::make_pair(-0.2, 0.2);
  Vector x(6, 0.1);
  const auto res = pgd(f.model, x, 0, cfg, rng, bounds);
  for (double v : res.x_adv) {
    EXPECT_GE(v, -0.2);
    EXPECT_LE(v, 0.2);
  }
}

TEST(Pgd, BatchMatchesRowwiseWithoutRandomStart) {
  const auto f = fixture(8, 10);
  const AttackConfig cfg{Norm::kL2, 1.0, 0.2, 20, std::nullopt, false};
  const auto batch = pgd_batch(f.model, f.x, f.y, cfg, {}, RngStream(1));
  for (std::size_t r = 0; r < f.x.rows(); ++r) {
    RngStream rng(1);
    const auto single = pgd(f.model, f.x.row(r), f.y[r], cfg, rng);
    for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(batch.x_adv(r, d), single.x_adv[d], 1e-12);
  }
}

TEST(Pgd, BatchRowsIndependentOfBatchComposition) {
  const auto f = fixture(9, 10);
  const AttackConfig cfg{Norm::kL2, 1.0, 0.2, 5, std::nullopt, true};
  const auto full = pgd_batch(f.model, f.x, f.y, cfg, {}, RngStream(4));
  const std::vector<std::size_t> first_rows(f.y.begin(), f.y.begin() + 3);
  Matrix head(3, 6);
  for (std::size_t r = 0; r < 3; ++r) std::copy(f.x.row(r).begin(), f.x.row(r).end(), head.row(r).begin());
  const auto part = pgd_batch(f.model, head, first_rows, cfg, {}, RngStream(4));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(part.x_adv(r, d), full.x_adv(r, d));
}

TEST(Pgd, RejectsInvalidConfig) {
  AttackConfig cfg;
  cfg.epsilon = -1.0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = AttackConfig{};
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
}

TEST(RandomTarget, UniformOverOtherClasses) {
  RngStream rng(13);
  std::vector<std::size_t> counts(5, 0);
  const std::size_t n = 40000;
  for (std::size_t k = 0; k < n; ++k) ++counts[random_target(2, 5, rng)];
  EXPECT_EQ(counts[2], 0u);
  for (std::size_t c : {0, 1, 3, 4}) EXPECT_NEAR(static_cast<double>(counts[c]) / n, 0.25, 0.02);
}

}  // namespace
}  // namespace bthick
