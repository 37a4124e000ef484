#include "gbdtbp/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gbdtbp/error.hpp"

namespace gbdtbp {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorCode::DimensionMismatch,
         "matrix data length " + std::to_string(data_.size()) + " != " +
             std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      fail(ErrorCode::DimensionMismatch, "ragged rows in Matrix::from_rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) {
    fail(ErrorCode::DimensionMismatch, "set_column length mismatch");
  }
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) fail(ErrorCode::DimensionMismatch, "hcat row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
  }
  return out;
}

namespace {

// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(seed_ ^ mix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double std) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + std * spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return mean + std * radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "Rng::below(0)");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng) {
  if (!(std > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian_matrix requires std > 0");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(mean, std);
  return m;
}

void cholesky_solve(Matrix gram, std::span<double> rhs) {
  const std::size_t d = gram.rows();
  if (gram.cols() != d || rhs.size() != d) {
    fail(ErrorCode::DimensionMismatch, "cholesky_solve shape mismatch");
  }
  // Pivots are compared against their own original diagonal so the rank test
  // does not depend on column scale.
  // In-place lower factor L with gram = L L^T.
  for (std::size_t j = 0; j < d; ++j) {
    double pivot = gram(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= gram(j, k) * gram(j, k);
    if (!(pivot > 1e-12 * std::max(std::abs(gram(j, j)), 1e-300))) {
      fail(ErrorCode::SingularSystem,
           "Gram matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(pivot);
    gram(j, j) = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      double s = gram(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= gram(i, k) * gram(j, k);
      gram(i, j) = s / ljj;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= gram(i, k) * rhs[k];
    rhs[i] = s / gram(i, i);
  }
  for (std::size_t i = d; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t k = i + 1; k < d; ++k) s -= gram(k, i) * rhs[k];
    rhs[i] = s / gram(i, i);
  }
}

Vector ridge_solve(const Matrix& a, std::span<const double> y, double lambda) {
  const std::size_t n = a.rows();
  const std::size_t d = a.cols();
  if (n == 0 || d == 0) fail(ErrorCode::EmptyInput, "ridge_solve on an empty design matrix");
  if (y.size() != n) fail(ErrorCode::DimensionMismatch, "ridge_solve: y length != rows");
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "ridge_solve: lambda must be >= 0");
  if (!a.all_finite() ||
      !std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) {
    fail(ErrorCode::NonFiniteInput, "ridge_solve: non-finite input");
  }

  Matrix gram(d, d);
  Vector rhs(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = a.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      rhs[i] += row[i] * y[r];
      for (std::size_t j = 0; j <= i; ++j) gram(i, j) += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    gram(i, i) += lambda;
    for (std::size_t j = 0; j < i; ++j) gram(j, i) = gram(i, j);
  }
  cholesky_solve(std::move(gram), rhs);
  return rhs;
}

Vector finite_diff_gradient(const ScalarFunction& f, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "finite_diff_gradient requires eps > 0");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + eps;
    const double up = f(probe);
    probe[j] = x[j] - eps;
    const double down = f(probe);
    probe[j] = x[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorCode::NonFiniteResult,
           "finite_diff_gradient: non-finite probe at coordinate " + std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace gbdtbp
