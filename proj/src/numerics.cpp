#include "bthick/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "bthick/errors.hpp"

namespace bthick {

namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw ContractViolation(std::string(op) + ": non-finite result");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_,
          "Matrix: data length " + std::to_string(data_.size()) + " does not match " + shape_string());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << "(" << rows_ << "x" << cols_ << ")";
  return os.str();
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dimensions differ, a" + a.shape_string() + " b" + b.shape_string());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  require_finite(c, "matmul");
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(),
          "matmul_bt: a" + a.shape_string() + " and b" + b.shape_string() + " column counts differ");
  // Row i of the product only reads row i of a, so batched and per-row
  // evaluation agree bit-for-bit.
  return matmul(a, b.transposed());
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(),
          "matmul_at: a" + a.shape_string() + " and b" + b.shape_string() + " row counts differ");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(k, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row(i).data();
    const double* brow = b.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c.row(p).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  require_finite(c, "matmul_at");
  return c;
}

Matrix softmax_rows(const Matrix& logits) {
  require(logits.all_finite(), "softmax_rows: non-finite logits");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double l2_norm(const Matrix& v) {
  require(v.is_vector(), "l2_norm: expected a vector, got " + v.shape_string());
  return l2_norm(v.values());
}

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGoldenGamma);
}

double RngStream::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t RngStream::next_index(std::size_t n) {
  require(n > 0, "next_index: empty range");
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

double RngStream::next_uniform(double lo, double hi) {
  const double v = lo + (hi - lo) * next_unit();
  // Rounding can land exactly on hi for wide ranges.
  return v < hi ? v : std::nextafter(hi, lo);
}

double RngStream::next_normal() {
  const double u1 = 1.0 - next_unit();  // (0, 1]
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::next_gamma(double shape) {
  require(shape > 0.0, "next_gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = next_gamma(shape + 1.0);
    const double u = 1.0 - next_unit();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = next_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - next_unit();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::next_beta(double a, double b) {
  require(a > 0.0 && b > 0.0, "next_beta: parameters must be positive");
  if (a == 1.0 && b == 1.0) return next_unit();
  const double x = next_gamma(a);
  const double y = next_gamma(b);
  return x / (x + y);
}

bool RngStream::next_bernoulli(double p) { return next_unit() < p; }

RngStream RngStream::child(std::uint64_t index) const {
  return RngStream(mix64(seed_ ^ mix64(index + kGoldenGamma)) + index);
}

Matrix uniform(RngStream& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  require(lo < hi, "uniform: lo must be below hi");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.next_uniform(lo, hi);
  return m;
}

Matrix normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
  require(stddev >= 0.0, "normal: negative stddev");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = mean + stddev * rng.next_normal();
  return m;
}

std::vector<std::size_t> permutation(RngStream& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.next_index(i)]);
  return p;
}

namespace {
std::atomic<unsigned> g_default_threads{1};
}

unsigned default_threads() noexcept { return g_default_threads.load(); }
void set_default_threads(unsigned threads) noexcept { g_default_threads.store(std::max(1u, threads)); }

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace bthick
