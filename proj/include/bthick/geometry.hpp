#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "bthick/attack.hpp"
#include "bthick/datasets.hpp"
#include "bthick/model.hpp"

namespace bthick {

/// Segment between x_r (predicted class_i) and x_s (predicted class_j).
struct Segment {
  Vector x_r;
  Vector x_s;
  std::size_t class_i = 0;
  std::size_t class_j = 0;

  double length() const;
  /// x_r + t (x_s - x_r).
  Vector point(double t) const;
};

/// How the indicator integral along a segment is evaluated.
enum class Quadrature {
  /// Exact measure of the set where the piecewise-linear interpolant of the
  /// sampled g_ij lies strictly inside (alpha, beta).
  kInterpolated,
  /// Count of interior grid points strictly inside the window, times the
  /// grid spacing.
  kPointCount,
};

/// x_s is a PGD example of x_r aimed at a random other class.
struct AdversarialSampler {
  AttackConfig attack;
};
/// x_s is a random data point whose predicted class differs from x_r's.
struct RandomPairSampler {};
using SegmentSampler = std::variant<AdversarialSampler, RandomPairSampler>;

struct ThicknessSpec {
  double alpha = 0.0;
  double beta = 0.75;
  SegmentSampler sampler = AdversarialSampler{AttackConfig{Norm::kL2, 1.0, 0.2, 20, std::nullopt, false}};
  std::size_t num_segments = 320;
  std::size_t integration_points = 128;
  std::uint64_t seed = 0;
  Quadrature quadrature = Quadrature::kInterpolated;
  /// Predicted labels and attack targets range over the first
  /// label_classes outputs (0 = all). Used to mask a NONE output.
  std::size_t label_classes = 0;
  /// Worker cap; 0 uses default_threads(). Results do not depend on it.
  unsigned threads = 0;

  void validate() const;
};

struct ThicknessResult {
  double mean_thickness = 0.0;
  Vector per_segment;
  std::size_t skipped_segments = 0;
  ThicknessSpec spec_echo;
};

/// Fraction of [0, 1] on which samples g (evenly spaced, endpoints included)
/// lie strictly inside (alpha, beta) under the given rule.
double window_fraction(std::span<const double> g, double alpha, double beta, Quadrature rule);

double segment_thickness(const MlpModel& model, const Segment& seg, double alpha, double beta,
                         std::size_t points, Quadrature rule = Quadrature::kInterpolated);

/// Draws num_segments segments per the spec's sampler. Segments whose
/// endpoint keeps the predicted class are dropped and counted.
std::vector<Segment> sample_segments(const MlpModel& model, const Dataset& data,
                                     const ThicknessSpec& spec, std::size_t* skipped);

ThicknessResult measure_thickness(const MlpModel& model, const Dataset& data,
                                  const ThicknessSpec& spec);

/// Inverse of 2 sigmoid(u) - 1.
double gtilde_inverse(double y);

/// (gtilde^-1(beta) - gtilde^-1(alpha)) / |w| for a binary linear logistic
/// classifier measured along +/- w.
double closed_form_linear_thickness(std::span<const double> w, double alpha, double beta);

enum class MarginMode { kAverage, kWorst };

struct MarginResult {
  double value = 0.0;
  Vector per_sample;
  std::vector<std::size_t> source_class;
  std::vector<Segment> segments;
  std::size_t skipped = 0;
};

/// Segments from every data point to its PGD example (untargeted unless
/// attack.target is set). Points whose predicted class survives the attack
/// are skipped.
std::vector<Segment> attack_segments(const MlpModel& model, const Dataset& data,
                                     const AttackConfig& attack, std::size_t* skipped,
                                     std::uint64_t seed = 0, std::size_t label_classes = 0);

/// Distance from seg.x_r to the first zero of g_ij along the segment; the
/// bracketing cell is found on a 128-point scan and refined by bisection to
/// 1e-6 of the segment length.
double crossing_distance(const MlpModel& model, const Segment& seg);

MarginResult margin_details(const MlpModel& model, const Dataset& data, const AttackConfig& attack,
                            MarginMode mode, std::uint64_t seed = 0, std::size_t label_classes = 0);

double margin_along_attack(const MlpModel& model, const Dataset& data, const AttackConfig& attack,
                           MarginMode mode);

/// Sum of the smallest crossing distance among class-a sources and among
/// class-b sources: the width of the empty corridor between two classes
/// measured along the attack directions.
double two_sided_worst_margin(const MarginResult& margins, std::size_t class_a, std::size_t class_b);

/// Mean |<x1 - x2, grad g_ij(x)>| / (|x1 - x2| |grad g_ij(x)|) over random
/// data pairs with different predicted labels; x is uniform on the segment.
double tilting_cosine(const MlpModel& model, const Dataset& data, std::size_t num_pairs,
                      RngStream& rng, std::size_t label_classes = 0);

struct HardSvm2d {
  Vector w;  // min-norm v with y_i v.x_i >= 1
  double norm = 0.0;
  double angle = 0.0;
};

/// Hard-SVM through the origin for a 2-class 2D dataset (class 1 -> +1,
/// class 0 -> -1): coarse angular scan, golden-section refinement of the
/// angle, then the radial minimum in closed form.
HardSvm2d hard_svm_2d(const Dataset& data);

/// Worst-case cosine similarity to the hard-SVM direction over feasible v
/// with |v| = u, brute-forced over an angular grid anchored at w*.
double worst_case_tilting_2d(const Dataset& data, double u, std::size_t angular_resolution);

/// min over the 2c windows ((k-1)/c, k/c), k = -c+1..c, of the measure of
/// {t : h(t) in window}, with h tabulated on an even grid over [0, 1].
double minimax_1d_check(std::span<const double> h, std::size_t c);

}  // namespace bthick
