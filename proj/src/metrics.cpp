#include "gbdtbp/metrics.hpp"

#include <cmath>

#include "gbdtbp/error.hpp"

namespace gbdtbp {
namespace {

void check_shapes(const Matrix& pred, const Matrix& y) {
  if (pred.rows() != y.rows() || pred.cols() != y.cols()) {
    fail(ErrorCode::DimensionMismatch, "metric shape mismatch");
  }
  if (pred.empty()) fail(ErrorCode::EmptyInput, "metric on empty matrices");
}

}  // namespace

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

double rmse(const Matrix& pred, const Matrix& y) {
  check_shapes(pred, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const double e = pred.data()[i] - y.data()[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(pred.data().size()));
}

double accuracy(const Matrix& pred, const Matrix& y, double binary_threshold) {
  check_shapes(pred, y);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    if (pred.cols() == 1) {
      correct += (pred(r, 0) > binary_threshold) == (y(r, 0) > 0.5) ? 1 : 0;
    } else {
      correct += argmax(pred.row(r)) == argmax(y.row(r)) ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(pred.rows());
}

}  // namespace gbdtbp
