#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bthick {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_vector() const noexcept { return rows_ == 1 || cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  std::string shape_string() const;
  bool all_finite() const noexcept;
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& logits);

double l2_norm(const Matrix& v);
double l2_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

/// Index of the largest entry, ties toward the lowest index.
std::size_t argmax(std::span<const double> v);

/// Counter-based generator: draw k is splitmix64(seed + k * golden_gamma).
/// The full stream is a pure function of (seed, counter), so it replays
/// identically on every platform.
class RngStream {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-counter/v1";

  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_unit();
  /// Unbiased integer in [0, n).
  std::size_t next_index(std::size_t n);
  double next_uniform(double lo, double hi);
  double next_normal();
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double next_gamma(double shape);
  double next_beta(double a, double b);
  bool next_bernoulli(double p);

  /// Independent stream: child seed = mix(parent seed, index).
  RngStream child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

Matrix uniform(RngStream& rng, std::size_t rows, std::size_t cols, double lo, double hi);
Matrix normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double stddev);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(RngStream& rng, std::size_t n);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Callers write to
/// per-index slots, so results never depend on the worker count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

/// Default worker count used by measurement routines (1 unless changed).
unsigned default_threads() noexcept;
void set_default_threads(unsigned threads) noexcept;

}  // namespace bthick
