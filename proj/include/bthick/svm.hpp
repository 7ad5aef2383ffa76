#pragma once

#include <cstdint>

#include "bthick/datasets.hpp"
#include "bthick/numerics.hpp"

namespace bthick {

struct LinearSvm {
  Vector w;
  double b = 0.0;
  std::size_t iterations = 0;
};

struct SvmConfig {
  /// Hinge penalty; large values approach the hard-margin solution.
  double c = 1e4;
  /// Scale of the constant feature appended to carry the bias.
  double bias_scale = 1.0;
  std::size_t max_iterations = 20000;
  /// Stop when the projected-gradient spread drops below this.
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
};

/// Binary soft-margin linear SVM (class 1 -> +1, class 0 -> -1) solved by
/// dual coordinate descent. The bias rides on an appended constant feature,
/// so it is weakly regularized.
LinearSvm fit_linear_svm(const Dataset& data, const SvmConfig& cfg = {});

}  // namespace bthick
