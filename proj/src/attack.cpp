#include "bthick/attack.hpp"

#include <algorithm>
#include <cmath>

#include "bthick/errors.hpp"

namespace bthick {

void AttackConfig::validate() const {
  require(epsilon > 0.0, "AttackConfig: epsilon must be positive");
  require(step_size > 0.0, "AttackConfig: step_size must be positive");
  require(steps >= 1, "AttackConfig: steps must be at least 1");
}

namespace {

void project(std::span<double> x, std::span<const double> origin, Norm norm, double epsilon,
             const Bounds& bounds) {
  if (norm == Norm::kL2) {
    double sq = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) sq += (x[c] - origin[c]) * (x[c] - origin[c]);
    const double dist = std::sqrt(sq);
    if (dist > epsilon) {
      const double scale = epsilon / dist;
      for (std::size_t c = 0; c < x.size(); ++c) x[c] = origin[c] + (x[c] - origin[c]) * scale;
    }
  } else {
    for (std::size_t c = 0; c < x.size(); ++c)
      x[c] = std::clamp(x[c], origin[c] - epsilon, origin[c] + epsilon);
  }
  if (bounds)
    for (double& v : x) v = std::clamp(v, bounds->first, bounds->second);
}

void random_start(std::span<double> x, Norm norm, double epsilon, RngStream rng) {
  if (norm == Norm::kLinf) {
    for (double& v : x) v += rng.next_uniform(-epsilon, epsilon);
    return;
  }
  Vector dir(x.size());
  for (double& v : dir) v = rng.next_normal();
  const double n = l2_norm(dir);
  if (n == 0.0) return;
  const double radius =
      epsilon * std::pow(rng.next_unit(), 1.0 / static_cast<double>(x.size()));
  for (std::size_t c = 0; c < x.size(); ++c) x[c] += dir[c] / n * radius;
}

}  // namespace

BatchAttackResult pgd_batch(const MlpModel& model, const Matrix& x,
                            std::span<const std::size_t> sources, const AttackConfig& cfg,
                            std::span<const std::size_t> targets, const RngStream& rng,
                            const Bounds& bounds) {
  cfg.validate();
  require(x.cols() == model.input_dim(), "pgd: input dimension does not match model");
  require(sources.size() == x.rows(), "pgd: one source class per row required");
  require(targets.empty() || targets.size() == x.rows(), "pgd: one target per row required");
  const std::size_t n = x.rows();
  const bool targeted = !targets.empty() || cfg.target.has_value();
  std::vector<std::size_t> aim(n);
  for (std::size_t r = 0; r < n; ++r) {
    require(sources[r] < model.num_classes(), "pgd: source class out of range");
    if (targeted) {
      aim[r] = targets.empty() ? *cfg.target : targets[r];
      require(aim[r] < model.num_classes(), "pgd: target class out of range");
      require(aim[r] != sources[r], "pgd: target class equals source class");
    } else {
      aim[r] = sources[r];
    }
  }

  BatchAttackResult out{x, std::vector<bool>(n, true)};
  if (cfg.random_start) {
    for (std::size_t r = 0; r < n; ++r) {
      random_start(out.x_adv.row(r), cfg.norm, cfg.epsilon, rng.child(r));
      project(out.x_adv.row(r), x.row(r), cfg.norm, cfg.epsilon, bounds);
    }
  }
  const double direction = targeted ? -1.0 : 1.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Matrix grad = input_gradients_ce(model, out.x_adv, aim);
    for (std::size_t r = 0; r < n; ++r) {
      auto g = grad.row(r);
      auto xr = out.x_adv.row(r);
      if (cfg.norm == Norm::kL2) {
        const double gn = l2_norm(g);
        if (!(gn > 0.0)) continue;
        out.degenerate[r] = false;
        const double s = direction * cfg.step_size / gn;
        for (std::size_t c = 0; c < xr.size(); ++c) xr[c] += s * g[c];
      } else {
        bool any = false;
        for (std::size_t c = 0; c < xr.size(); ++c) {
          if (g[c] == 0.0) continue;
          any = true;
          xr[c] += direction * cfg.step_size * (g[c] > 0.0 ? 1.0 : -1.0);
        }
        if (!any) continue;
        out.degenerate[r] = false;
      }
      project(xr, x.row(r), cfg.norm, cfg.epsilon, bounds);
    }
  }
  return out;
}

AttackResult pgd(const MlpModel& model, std::span<const double> x, std::size_t y_source,
                 const AttackConfig& cfg, RngStream& rng, const Bounds& bounds) {
  const std::size_t sources[] = {y_source};
  auto batch = pgd_batch(model, Matrix::row_vector(x), sources, cfg, {}, rng, bounds);
  rng.next_u64();
  return {Vector(batch.x_adv.values().begin(), batch.x_adv.values().end()), batch.degenerate[0]};
}

std::size_t random_target(std::size_t y_source, std::size_t num_classes, RngStream& rng) {
  require(num_classes >= 2, "random_target: need at least two classes");
  require(y_source < num_classes, "random_target: source class out of range");
  const std::size_t k = rng.next_index(num_classes - 1);
  return k < y_source ? k : k + 1;
}

}  // namespace bthick
