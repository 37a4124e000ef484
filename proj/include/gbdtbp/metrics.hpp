#pragma once

#include "gbdtbp/numeric.hpp"

namespace gbdtbp {

// sqrt of the mean squared error over every entry.
double rmse(const Matrix& pred, const Matrix& y);

// Fraction of rows whose argmax (lowest index on ties) matches the argmax of
// the one-hot target. Single-column targets are binary 0/1 labels and a
// prediction counts as class 1 when it exceeds `binary_threshold`.
double accuracy(const Matrix& pred, const Matrix& y, double binary_threshold = 0.5);

std::size_t argmax(std::span<const double> row);

}  // namespace gbdtbp
