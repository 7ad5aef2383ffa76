#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bthick/model.hpp"
#include "bthick/numerics.hpp"

namespace bthick {

enum class Norm { kL2, kLinf };

struct AttackConfig {
  Norm norm = Norm::kL2;
  double epsilon = 1.0;
  double step_size = 0.2;
  std::size_t steps = 20;
  /// Targeted attack toward this class when set; untargeted otherwise.
  std::optional<std::size_t> target;
  bool random_start = false;

  void validate() const;
};

using Bounds = std::optional<std::pair<double, double>>;

struct AttackResult {
  Vector x_adv;
  /// The gradient vanished at every step, so no step was taken.
  bool degenerate = false;
};

/// Projected gradient descent. Untargeted mode ascends the cross-entropy of
/// y_source; targeted mode descends the cross-entropy of the target. l2
/// steps follow grad/|grad|, linf steps follow sign(grad); each step is
/// followed by projection onto the epsilon ball and, if given, clamping to
/// the data bounds.
AttackResult pgd(const MlpModel& model, std::span<const double> x, std::size_t y_source,
                 const AttackConfig& cfg, RngStream& rng, const Bounds& bounds = std::nullopt);

struct BatchAttackResult {
  Matrix x_adv;
  std::vector<bool> degenerate;
};

/// Row-wise pgd. `targets` overrides cfg.target per row when non-empty.
/// Random starts for row k draw from rng.child(k), so each row's result is
/// independent of batch composition.
BatchAttackResult pgd_batch(const MlpModel& model, const Matrix& x,
                            std::span<const std::size_t> sources, const AttackConfig& cfg,
                            std::span<const std::size_t> targets, const RngStream& rng,
                            const Bounds& bounds = std::nullopt);

/// Uniform over the classes other than y_source.
std::size_t random_target(std::size_t y_source, std::size_t num_classes, RngStream& rng);

}  // namespace bthick
