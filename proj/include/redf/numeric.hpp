#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace redf {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix identity(std::size_t n);
  // Convenience for small literals in tests and fixtures.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// All binary ops throw ShapeError on incompatible operands. Summation order
// is fixed (row-major, left to right) so results are bitwise reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix scale(const Matrix& a, double s);

// Logistic function, evaluated so that neither branch overflows.
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_act(double x) noexcept { return std::tanh(x); }

// Derivatives expressed through the activation output y.
inline double sigmoid_grad_from_output(double y) noexcept { return y * (1.0 - y); }
inline double tanh_grad_from_output(double y) noexcept { return 1.0 - y * y; }

// Seeded generator shared by every stochastic component.
//
// The engine is std::mt19937_64 (MT19937-64, fully specified by the C++
// standard, so the raw 64-bit stream is identical on every platform). The
// std:: distributions are implementation-defined, so all conversions to
// doubles and integers are done here explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call, no caching).
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Glorot/Xavier uniform: entries in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))).
Matrix glorot_init(Rng& rng, std::size_t rows, std::size_t cols);

// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace redf
