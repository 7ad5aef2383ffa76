#include <gtest/gtest.h>

#include <cmath>

#include "bthick/errors.hpp"
#include "bthick/model.hpp"
#include "gradcheck.hpp"

namespace bthick {
namespace {

TEST(Gradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = testing::random_gradcheck_case(1000 + seed);
    const auto out = testing::check_gradients(c);
    EXPECT_TRUE(out.ok) << "seed " << seed << ": " << out.first_failure;
  }
}

TEST(Gradients, BatchedInputGradientsMatchSingleRow) {
  auto c = testing::random_gradcheck_case(7);
  const std::size_t cls = c.model.num_classes() - 1;
  std::vector<std::size_t> classes(c.x.rows(), cls);
  const Matrix batched = input_gradients_ce(c.model, c.x, classes);
  for (std::size_t r = 0; r < c.x.rows(); ++r) {
    const Vector single = input_gradient(c.model, c.x.row(r), LossVsOneHot{cls});
    for (std::size_t d = 0; d < single.size(); ++d) EXPECT_NEAR(batched(r, d), single[d], 1e-12);
  }
}

TEST(Forward, IsPure) {
  const auto c = testing::random_gradcheck_case(3);
  EXPECT_EQ(forward(c.model, c.x).probs, forward(c.model, c.x).probs);
}

TEST(Forward, PosteriorGapStaysInOpenInterval) {
  RngStream rng(5);
  const auto model = MlpModel::he_init(residual_mlp_specs(4, 8, 3, 3), rng);
  const Matrix x = normal(rng, 200, 4, 0.0, 50.0);
  for (double g : posterior_gaps(model, x, 0, 1)) {
    EXPECT_GE(g, -1.0);
    EXPECT_LE(g, 1.0);
  }
}

TEST(Model, LinearLogisticMatchesSigmoid) {
  const Vector w{3.0, -4.0};
  const auto model = linear_logistic_model(w, 0.5);
  const Matrix x{{0.1, 0.2}, {-1.0, 0.3}};
  const Matrix p = forward(model, x).probs;
  for (std::size_t r = 0; r < 2; ++r) {
    const double z = w[0] * x(r, 0) + w[1] * x(r, 1) + 0.5;
    EXPECT_NEAR(p(r, 0), 1.0 / (1.0 + std::exp(-z)), 1e-14);
  }
}

TEST(Model, ResidualSpecsShape) {
  const auto specs = residual_mlp_specs(100, 32, 9, 2);
  ASSERT_EQ(specs.size(), 9u);
  EXPECT_EQ(specs.front().in_dim, 100u);
  EXPECT_FALSE(specs.front().residual);
  for (std::size_t k = 1; k + 1 < specs.size(); ++k) EXPECT_TRUE(specs[k].residual);
  EXPECT_EQ(specs.back().out_dim, 2u);
  EXPECT_EQ(specs.back().activation, Activation::kIdentity);
}

TEST(Model, HeInitScale) {
  RngStream rng(1);
  const auto model = MlpModel::he_init({{400, 300, Activation::kRelu, false}}, rng);
  double sq = 0.0;
  for (double v : model.layers()[0].weights.values()) sq += v * v;
  EXPECT_NEAR(sq / 120000.0, 2.0 / 400.0, 2e-4);
  for (double b : model.layers()[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Model, PredictLabelsMasksExtraClasses) {
  MlpModel model({{1, 3, Activation::kIdentity, false}});
  model.mutable_layers()[0].bias = {0.0, 1.0, 5.0};
  const Matrix x{{0.0}};
  EXPECT_EQ(predict_labels(model, x)[0], 2u);
  EXPECT_EQ(predict_labels(model, x, 2)[0], 1u);
}

TEST(Model, RejectsBadShapes) {
  EXPECT_THROW(MlpModel({{2, 3, Activation::kRelu, true}}), ContractViolation);
  MlpModel model({{2, 2, Activation::kIdentity, false}});
  EXPECT_THROW(forward(model, Matrix(1, 3)), ContractViolation);
}

}  // namespace
}  // namespace bthick
