#include "bthick/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bthick/errors.hpp"

namespace bthick {

namespace {

// Segments are attacked in fixed-size blocks so the random streams (and
// therefore results) do not depend on the worker count.
constexpr std::size_t kAttackBlock = 64;
constexpr std::size_t kScanPoints = 128;
constexpr double kBisectionTolerance = 1e-6;
constexpr std::size_t kMaxPairDraws = 1000;

unsigned worker_count(unsigned requested) { return requested == 0 ? default_threads() : requested; }

Matrix segment_grid(const Segment& seg, std::size_t points) {
  Matrix grid(points, seg.x_r.size());
  const double denom = static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) {
    const double t = static_cast<double>(k) / denom;
    auto row = grid.row(k);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = seg.x_r[c] + t * (seg.x_s[c] - seg.x_r[c]);
  }
  return grid;
}

void check_segment(const MlpModel& model, const Segment& seg) {
  require(seg.x_r.size() == seg.x_s.size(), "segment endpoints differ in dimension");
  require(seg.x_r.size() == model.input_dim(), "segment dimension does not match model");
  require(seg.class_i != seg.class_j, "segment classes must differ");
  require(seg.class_i < model.num_classes() && seg.class_j < model.num_classes(),
          "segment class out of range");
}

double g_at(const MlpModel& model, const Segment& seg, double t) {
  return evaluate_scalar(model, seg.point(t), PosteriorGap{seg.class_i, seg.class_j});
}

std::size_t label_count(const MlpModel& model, std::size_t label_classes) {
  require(label_classes <= model.num_classes(), "label_classes exceeds model outputs");
  const std::size_t c = label_classes == 0 ? model.num_classes() : label_classes;
  require(c >= 2, "need at least two label classes");
  return c;
}

// m(theta) = min_i y_i <d(theta), x_i>.
double min_signed_margin(const Dataset& data, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < data.size(); ++r) {
    const double y = data.y[r] == 1 ? 1.0 : -1.0;
    m = std::min(m, y * (c * data.x(r, 0) + s * data.x(r, 1)));
  }
  return m;
}

}  // namespace

double Segment::length() const {
  double s = 0.0;
  for (std::size_t c = 0; c < x_r.size(); ++c) s += (x_s[c] - x_r[c]) * (x_s[c] - x_r[c]);
  return std::sqrt(s);
}

Vector Segment::point(double t) const {
  Vector p(x_r.size());
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = x_r[c] + t * (x_s[c] - x_r[c]);
  return p;
}

void ThicknessSpec::validate() const {
  require(alpha > -1.0 && alpha < 1.0, "ThicknessSpec: alpha must lie in (-1, 1)");
  require(beta > -1.0 && beta <= 1.0, "ThicknessSpec: beta must lie in (-1, 1]");
  require(alpha < beta, "ThicknessSpec: alpha must be below beta");
  require(integration_points >= 2, "ThicknessSpec: integration_points must be at least 2");
  require(num_segments >= 1, "ThicknessSpec: num_segments must be positive");
  if (const auto* adv = std::get_if<AdversarialSampler>(&sampler)) adv->attack.validate();
}

double window_fraction(std::span<const double> g, double alpha, double beta, Quadrature rule) {
  require(g.size() >= 2, "window_fraction: need at least two samples");
  require(alpha < beta, "window_fraction: alpha must be below beta");
  const double cells = static_cast<double>(g.size() - 1);
  if (rule == Quadrature::kPointCount) {
    std::size_t count = 0;
    for (std::size_t k = 1; k + 1 < g.size(); ++k) count += (alpha < g[k] && g[k] < beta);
    return static_cast<double>(count) / cells;
  }
  double covered = 0.0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double a = g[k], b = g[k + 1];
    if (a == b) {
      covered += (alpha < a && a < beta) ? 1.0 : 0.0;
      continue;
    }
    // g(s) = a + (b - a) s on s in [0, 1]; keep s where alpha < g(s) < beta.
    const double s_alpha = (alpha - a) / (b - a);
    const double s_beta = (beta - a) / (b - a);
    const double lo = std::max(0.0, std::min(s_alpha, s_beta));
    const double hi = std::min(1.0, std::max(s_alpha, s_beta));
    if (hi > lo) covered += hi - lo;
  }
  return std::min(1.0, covered / cells);
}

double segment_thickness(const MlpModel& model, const Segment& seg, double alpha, double beta,
                         std::size_t points, Quadrature rule) {
  check_segment(model, seg);
  require(alpha < beta, "segment_thickness: alpha must be below beta");
  require(points >= 2, "segment_thickness: need at least two integration points");
  const Vector g = posterior_gaps(model, segment_grid(seg, points), seg.class_i, seg.class_j);
  return seg.length() * window_fraction(g, alpha, beta, rule);
}

std::vector<Segment> sample_segments(const MlpModel& model, const Dataset& data,
                                     const ThicknessSpec& spec, std::size_t* skipped) {
  spec.validate();
  data.validate();
  require(data.dim() == model.input_dim(), "data dimension does not match model");
  const std::size_t classes = label_count(model, spec.label_classes);
  const RngStream root(spec.seed);
  const std::size_t n = spec.num_segments;

  // Per-segment choices come from root.child(s) so they are independent of
  // the sampler's batching.
  std::vector<std::size_t> source(n), targets(n);
  std::vector<std::size_t> predicted_all;
  if (std::holds_alternative<RandomPairSampler>(spec.sampler))
    predicted_all = predict_labels(model, data.x, classes);

  Matrix x_r(n, data.dim());
  for (std::size_t s = 0; s < n; ++s) {
    RngStream r = root.child(s);
    source[s] = r.next_index(data.size());
    auto src = data.x.row(source[s]);
    std::copy(src.begin(), src.end(), x_r.row(s).begin());
  }
  const auto class_r = predict_labels(model, x_r, classes);

  std::vector<Segment> segments(n);
  std::vector<bool> keep(n, false);
  if (const auto* adv = std::get_if<AdversarialSampler>(&spec.sampler)) {
    for (std::size_t s = 0; s < n; ++s) {
      RngStream r = root.child(s);
      r.next_index(data.size());
      targets[s] = random_target(class_r[s], classes, r);
    }
    const std::size_t blocks = (n + kAttackBlock - 1) / kAttackBlock;
    const RngStream attack_root = root.child(std::numeric_limits<std::uint64_t>::max());
    parallel_for(blocks, worker_count(spec.threads), [&](std::size_t b) {
      const std::size_t lo = b * kAttackBlock, hi = std::min(n, lo + kAttackBlock);
      Matrix xb(hi - lo, data.dim());
      for (std::size_t s = lo; s < hi; ++s) {
        auto src = x_r.row(s);
        std::copy(src.begin(), src.end(), xb.row(s - lo).begin());
      }
      std::span<const std::size_t> src_cls(class_r.data() + lo, hi - lo);
      std::span<const std::size_t> tgt(targets.data() + lo, hi - lo);
      const auto res = pgd_batch(model, xb, src_cls, adv->attack, tgt, attack_root.child(b), data.bounds);
      const auto class_s = predict_labels(model, res.x_adv, classes);
      for (std::size_t s = lo; s < hi; ++s) {
        if (class_s[s - lo] == class_r[s]) continue;
        auto xs = res.x_adv.row(s - lo);
        segments[s] = Segment{Vector(x_r.row(s).begin(), x_r.row(s).end()), Vector(xs.begin(), xs.end()),
                              class_r[s], class_s[s - lo]};
        keep[s] = true;
      }
    });
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      RngStream r = root.child(s);
      r.next_index(data.size());
      for (std::size_t draw = 0; draw < kMaxPairDraws; ++draw) {
        const std::size_t other = r.next_index(data.size());
        if (predicted_all[other] == class_r[s]) continue;
        auto xs = data.x.row(other);
        segments[s] = Segment{Vector(x_r.row(s).begin(), x_r.row(s).end()), Vector(xs.begin(), xs.end()),
                              class_r[s], predicted_all[other]};
        keep[s] = true;
        break;
      }
    }
  }

  std::vector<Segment> out;
  std::size_t dropped = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (keep[s])
      out.push_back(std::move(segments[s]));
    else
      ++dropped;
  }
  if (skipped) *skipped = dropped;
  return out;
}

ThicknessResult measure_thickness(const MlpModel& model, const Dataset& data,
                                  const ThicknessSpec& spec) {
  std::size_t skipped = 0;
  const auto segments = sample_segments(model, data, spec, &skipped);
  if (segments.empty())
    throw MeasurementError("measure_thickness: every segment was skipped (" + std::to_string(skipped) + ")",
                           skipped);
  ThicknessResult result;
  result.spec_echo = spec;
  result.skipped_segments = skipped;
  result.per_segment.resize(segments.size());
  parallel_for(segments.size(), worker_count(spec.threads), [&](std::size_t s) {
    result.per_segment[s] =
        segment_thickness(model, segments[s], spec.alpha, spec.beta, spec.integration_points, spec.quadrature);
  });
  double sum = 0.0;
  for (double v : result.per_segment) sum += v;
  result.mean_thickness = sum / static_cast<double>(result.per_segment.size());
  return result;
}

double gtilde_inverse(double y) {
  require(y > -1.0 && y < 1.0, "gtilde_inverse: argument must lie in (-1, 1)");
  return std::log((1.0 + y) / (1.0 - y));
}

double closed_form_linear_thickness(std::span<const double> w, double alpha, double beta) {
  require(std::abs(alpha) < 1.0 && std::abs(beta) < 1.0, "closed_form_linear_thickness: |alpha|, |beta| must be < 1");
  require(alpha < beta, "closed_form_linear_thickness: alpha must be below beta");
  const double norm = l2_norm(w);
  require(norm > 0.0, "closed_form_linear_thickness: w must be nonzero");
  return (gtilde_inverse(beta) - gtilde_inverse(alpha)) / norm;
}

std::vector<Segment> attack_segments(const MlpModel& model, const Dataset& data,
                                     const AttackConfig& attack, std::size_t* skipped,
                                     std::uint64_t seed, std::size_t label_classes) {
  data.validate();
  attack.validate();
  const std::size_t classes = label_count(model, label_classes);
  const auto class_r = predict_labels(model, data.x, classes);
  std::vector<std::size_t> targets;
  if (attack.target) {
    targets.assign(data.size(), *attack.target);
  }
  const RngStream root(seed);
  std::vector<Segment> out;
  std::size_t dropped = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += kAttackBlock) {
    const std::size_t hi = std::min(data.size(), lo + kAttackBlock);
    Matrix xb(hi - lo, data.dim());
    std::vector<std::size_t> tgt;
    for (std::size_t r = lo; r < hi; ++r) {
      auto src = data.x.row(r);
      std::copy(src.begin(), src.end(), xb.row(r - lo).begin());
    }
    AttackConfig cfg = attack;
    cfg.target.reset();
    if (attack.target) {
      // Rows already predicted as the target have nothing to attack.
      for (std::size_t r = lo; r < hi; ++r) tgt.push_back(*attack.target);
    }
    std::span<const std::size_t> src_cls(class_r.data() + lo, hi - lo);
    std::vector<std::size_t> eligible;
    for (std::size_t r = lo; r < hi; ++r)
      if (!attack.target || class_r[r] != *attack.target) eligible.push_back(r - lo);
    dropped += (hi - lo) - eligible.size();
    if (eligible.empty()) continue;
    Matrix xe(eligible.size(), data.dim());
    std::vector<std::size_t> se, te;
    for (std::size_t k = 0; k < eligible.size(); ++k) {
      auto src = xb.row(eligible[k]);
      std::copy(src.begin(), src.end(), xe.row(k).begin());
      se.push_back(src_cls[eligible[k]]);
      if (attack.target) te.push_back(*attack.target);
    }
    const auto res = pgd_batch(model, xe, se, cfg, te, root.child(lo / kAttackBlock), data.bounds);
    const auto class_s = predict_labels(model, res.x_adv, classes);
    for (std::size_t k = 0; k < eligible.size(); ++k) {
      if (class_s[k] == se[k]) {
        ++dropped;
        continue;
      }
      auto xr = xe.row(k);
      auto xs = res.x_adv.row(k);
      out.push_back(Segment{Vector(xr.begin(), xr.end()), Vector(xs.begin(), xs.end()), se[k], class_s[k]});
    }
  }
  if (skipped) *skipped = dropped;
  return out;
}

double crossing_distance(const MlpModel& model, const Segment& seg) {
  check_segment(model, seg);
  const double length = seg.length();
  const Vector g = posterior_gaps(model, segment_grid(seg, kScanPoints), seg.class_i, seg.class_j);
  if (g[0] <= 0.0) return 0.0;
  std::size_t k = 1;
  while (k < g.size() && g[k] > 0.0) ++k;
  require(k < g.size(), "crossing_distance: g_ij keeps its sign along the segment");
  const double cell = 1.0 / static_cast<double>(kScanPoints - 1);
  double lo = static_cast<double>(k - 1) * cell;
  double hi = static_cast<double>(k) * cell;
  while (hi - lo > kBisectionTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (g_at(model, seg, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi) * length;
}

MarginResult margin_details(const MlpModel& model, const Dataset& data, const AttackConfig& attack,
                            MarginMode mode, std::uint64_t seed, std::size_t label_classes) {
  MarginResult result;
  result.segments = attack_segments(model, data, attack, &result.skipped, seed, label_classes);
  if (result.segments.empty())
    throw MeasurementError("margin_along_attack: every attack failed", result.skipped);
  result.per_sample.resize(result.segments.size());
  for (std::size_t s = 0; s < result.segments.size(); ++s) {
    result.per_sample[s] = crossing_distance(model, result.segments[s]);
    result.source_class.push_back(result.segments[s].class_i);
  }
  if (mode == MarginMode::kWorst) {
    result.value = *std::min_element(result.per_sample.begin(), result.per_sample.end());
  } else {
    double sum = 0.0;
    for (double v : result.per_sample) sum += v;
    result.value = sum / static_cast<double>(result.per_sample.size());
  }
  return result;
}

double margin_along_attack(const MlpModel& model, const Dataset& data, const AttackConfig& attack,
                           MarginMode mode) {
  return margin_details(model, data, attack, mode).value;
}

double two_sided_worst_margin(const MarginResult& margins, std::size_t class_a, std::size_t class_b) {
  double a = std::numeric_limits<double>::infinity(), b = a;
  for (std::size_t s = 0; s < margins.per_sample.size(); ++s) {
    if (margins.source_class[s] == class_a) a = std::min(a, margins.per_sample[s]);
    if (margins.source_class[s] == class_b) b = std::min(b, margins.per_sample[s]);
  }
  if (!std::isfinite(a) || !std::isfinite(b))
    throw MeasurementError("two_sided_worst_margin: a class has no measured sample", margins.skipped);
  return a + b;
}

double tilting_cosine(const MlpModel& model, const Dataset& data, std::size_t num_pairs,
                      RngStream& rng, std::size_t label_classes) {
  data.validate();
  require(num_pairs >= 1, "tilting_cosine: num_pairs must be positive");
  require(data.num_classes >= 2, "tilting_cosine: data needs at least two classes");
  const std::size_t classes = label_count(model, label_classes);
  const auto predicted = predict_labels(model, data.x, classes);
  double sum = 0.0;
  for (std::size_t p = 0; p < num_pairs; ++p) {
    bool found = false;
    for (std::size_t draw = 0; draw < kMaxPairDraws && !found; ++draw) {
      const std::size_t a = rng.next_index(data.size());
      const std::size_t b = rng.next_index(data.size());
      const double t = rng.next_unit();
      if (predicted[a] == predicted[b]) continue;
      auto x1 = data.x.row(a);
      auto x2 = data.x.row(b);
      Vector diff(x1.size()), x(x1.size());
      for (std::size_t c = 0; c < x1.size(); ++c) {
        diff[c] = x1[c] - x2[c];
        x[c] = x1[c] + t * (x2[c] - x1[c]);
      }
      const Vector grad = input_gradient(model, x, PosteriorGap{predicted[a], predicted[b]});
      const double gn = l2_norm(grad), dn = l2_norm(diff);
      if (!(gn > 0.0) || !(dn > 0.0)) continue;
      sum += std::min(1.0, std::abs(dot(diff, grad)) / (dn * gn));
      found = true;
    }
    if (!found)
      throw MeasurementError("tilting_cosine: no mixed-label pair with a usable gradient found", p);
  }
  return sum / static_cast<double>(num_pairs);
}

HardSvm2d hard_svm_2d(const Dataset& data) {
  data.validate();
  require(data.dim() == 2, "hard_svm_2d: data must be two-dimensional");
  require(data.num_classes == 2, "hard_svm_2d: data must have two classes");
  constexpr std::size_t kCoarse = 7200;
  const double two_pi = 2.0 * std::numbers::pi;
  double best_theta = 0.0, best_m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kCoarse; ++k) {
    const double theta = two_pi * static_cast<double>(k) / kCoarse;
    const double m = min_signed_margin(data, theta);
    if (m > best_m) {
      best_m = m;
      best_theta = theta;
    }
  }
  if (!(best_m > 0.0)) throw InfeasibleError("hard_svm_2d: data is not separable through the origin");
  // m(theta) is concave on the feasible arc, so golden-section search finds
  // its maximum inside the bracketing coarse cells.
  const double step = two_pi / kCoarse;
  double lo = best_theta - step, hi = best_theta + step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
  double fa = min_signed_margin(data, a), fb = min_signed_margin(data, b);
  while (hi - lo > 1e-13) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = min_signed_margin(data, b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = min_signed_margin(data, a);
    }
  }
  HardSvm2d svm;
  svm.angle = 0.5 * (lo + hi);
  const double m = min_signed_margin(data, svm.angle);
  svm.norm = 1.0 / m;
  svm.w = {std::cos(svm.angle) * svm.norm, std::sin(svm.angle) * svm.norm};
  return svm;
}

double worst_case_tilting_2d(const Dataset& data, double u, std::size_t angular_resolution) {
  require(angular_resolution >= 360, "worst_case_tilting_2d: angular_resolution must be at least 360");
  const HardSvm2d svm = hard_svm_2d(data);
  if (u < svm.norm * (1.0 - 1e-12))
    throw InfeasibleError("worst_case_tilting_2d: u = " + std::to_string(u) + " is below |w*| = " +
                          std::to_string(svm.norm));
  const double two_pi = 2.0 * std::numbers::pi;
  double worst = 1.0;
  for (std::size_t k = 0; k < angular_resolution; ++k) {
    const double offset = two_pi * static_cast<double>(k) / static_cast<double>(angular_resolution);
    const double m = min_signed_margin(data, svm.angle + offset);
    // v = u d(theta) is feasible iff u m(theta) >= 1.
    if (!(m > 0.0) || u * m < 1.0 - 1e-12) continue;
    worst = std::min(worst, std::abs(std::cos(offset)));
  }
  return worst;
}

double minimax_1d_check(std::span<const double> h, std::size_t c) {
  require(c >= 2, "minimax_1d_check: c must be at least 2");
  require(h.size() >= 1024, "minimax_1d_check: need at least 1024 tabulated points");
  for (double v : h) require(v >= -1.0 && v <= 1.0, "minimax_1d_check: h must map into [-1, 1]");
  const double spacing = 1.0 / static_cast<double>(h.size() - 1);
  const auto cd = static_cast<double>(c);
  double best = std::numeric_limits<double>::infinity();
  for (long k = -static_cast<long>(c) + 1; k <= static_cast<long>(c); ++k) {
    const double lo = static_cast<double>(k - 1) / cd;
    const double hi = static_cast<double>(k) / cd;
    std::size_t count = 0;
    for (double v : h) count += (lo < v && v < hi);
    best = std::min(best, static_cast<double>(count) * spacing);
  }
  return best;
}

}  // namespace bthick
