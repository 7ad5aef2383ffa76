#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bthick/numerics.hpp"

namespace bthick {

struct Dataset {
  Matrix x;                        // n x d
  std::vector<std::size_t> y;      // length n
  std::size_t num_classes = 0;
  /// Per-coordinate clamp range for attacks, when the data has one.
  std::optional<std::pair<double, double>> bounds;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct ChessboardSpec {
  std::size_t grid = 9;
  std::size_t points_per_square = 100;
  double square_len = 0.4;
  double separation = 0.6;
  double z_shift = 0.05;
  std::size_t pad_dim = 100;
  double pad_amplitude = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Index of the shift coordinate (the third input coordinate).
inline constexpr std::size_t kChessboardShiftAxis = 2;

/// Checkerboard with labels by square parity. Each square gets an
/// independent +/- z_shift on the shift axis; the remaining pad_dim - 3
/// coordinates are uniform noise in [-pad_amplitude, pad_amplitude].
Dataset chessboard(const ChessboardSpec& spec);

/// Negates the shift coordinate of every row (flips each square's sign).
Dataset flip_chessboard_shift(const Dataset& data);

/// One isotropic Gaussian cluster per center; class k is centers[k].
Dataset gaussian_blobs(const std::vector<Vector>& centers, double sigma, std::size_t n_per_class,
                       std::uint64_t seed);

struct GaussianNoise {
  double sigma;
};
struct UniformNoise {
  double amplitude;
};
struct CoordinateDropout {
  double p;
};
/// sign(x) |x|^(2/s) per coordinate, rescaled to keep each row's norm.
struct Saturation {
  double s;
};
using Corruption = std::variant<GaussianNoise, UniformNoise, CoordinateDropout, Saturation>;

/// Parses "gaussian_noise:0.1", "uniform_noise:0.2", "coordinate_dropout:0.3",
/// "saturation:4".
Corruption parse_corruption(const std::string& text);
std::string corruption_label(const Corruption& kind);

Dataset corrupt(const Dataset& data, const Corruption& kind, std::uint64_t seed);

/// Random split; the first dataset gets round(n * (1 - test_fraction)) rows.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

/// CSV with header f0,...,f{d-1},label. Values printed with round-trip
/// precision.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(const std::string& text);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

}  // namespace bthick
