#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace gbdtbp {

using Vector = std::vector<double>;

// Dense row-major matrix. Sized for the small systems this library solves
// (leaf Gram matrices, hidden representations with a few dozen columns).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  Vector column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix hcat(const Matrix& a, const Matrix& b);

// Seedable generator with portable output: the engine is mt19937_64 (its
// sequence is fixed by the standard) and the distributions are implemented
// here rather than taken from <random>, whose algorithms vary by vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent child stream keyed by `stream`; does not advance this state.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double std = 1.0);
  std::size_t below(std::size_t n);  // uniform integer in [0, n)

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng);

// Minimizes ||A w - y||^2 + lambda ||w||^2 through the normal equations
// (A^T A + lambda I) w = A^T y and a Cholesky factorization.
Vector ridge_solve(const Matrix& a, std::span<const double> y, double lambda);

// Solves the SPD system `gram * w = rhs` in place of `rhs`. Throws
// SingularSystem when a pivot collapses.
void cholesky_solve(Matrix gram, std::span<double> rhs);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(x + eps e_j) - f(x - eps e_j)) / (2 eps).
Vector finite_diff_gradient(const ScalarFunction& f, std::span<const double> x, double eps);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace gbdtbp
