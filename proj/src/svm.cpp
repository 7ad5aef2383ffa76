#include "bthick/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bthick/errors.hpp"

namespace bthick {

LinearSvm fit_linear_svm(const Dataset& data, const SvmConfig& cfg) {
  data.validate();
  require(data.num_classes == 2, "fit_linear_svm: data must have two classes");
  require(cfg.c > 0.0, "fit_linear_svm: c must be positive");
  const std::size_t n = data.size(), d = data.dim();
  // Augmented weights: w[0..d) then the bias coefficient.
  Vector w(d + 1, 0.0), alpha(n, 0.0), q(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = data.y[i] == 1 ? 1.0 : -1.0;
    double s = cfg.bias_scale * cfg.bias_scale;
    for (double v : data.x.row(i)) s += v * v;
    q[i] = s;
  }
  RngStream rng(cfg.seed);
  LinearSvm out;
  for (out.iterations = 0; out.iterations < cfg.max_iterations; ++out.iterations) {
    const auto order = permutation(rng, n);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      auto x = data.x.row(i);
      double wx = w[d] * cfg.bias_scale;
      for (std::size_t k = 0; k < d; ++k) wx += w[k] * x[k];
      const double g = y[i] * wx - 1.0;
      double pg = g;
      if (alpha[i] == 0.0)
        pg = std::min(g, 0.0);
      else if (alpha[i] == cfg.c)
        pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0 || q[i] == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / q[i], 0.0, cfg.c);
      const double delta = (alpha[i] - old) * y[i];
      for (std::size_t k = 0; k < d; ++k) w[k] += delta * x[k];
      w[d] += delta * cfg.bias_scale;
    }
    if (pg_max - pg_min < cfg.tolerance) break;
  }
  out.w.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(d));
  out.b = w[d] * cfg.bias_scale;
  return out;
}

}  // namespace bthick
