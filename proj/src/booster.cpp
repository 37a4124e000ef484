#include "gbdtbp/booster.hpp"

#include <string>

#include "gbdtbp/error.hpp"

namespace gbdtbp {

void BoosterParams::validate() const {
  if (n_boosters < 1) fail(ErrorCode::InvalidArgument, "n_boosters must be >= 1");
  if (!(shrinkage > 0.0 && shrinkage <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "shrinkage must lie in (0, 1]");
  }
  tree.validate();
}

Booster::Booster(std::vector<DecisionTree> trees, double shrinkage, std::size_t input_dim)
    : trees_(std::move(trees)), shrinkage_(shrinkage), input_dim_(input_dim) {
  for (const DecisionTree& tree : trees_) {
    if (tree.input_dim() != input_dim_) {
      fail(ErrorCode::DimensionMismatch, "booster member tree input dimension mismatch");
    }
  }
}

double Booster::predict(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    fail(ErrorCode::DimensionMismatch, "booster expects " + std::to_string(input_dim_) +
                                           " inputs, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const DecisionTree& tree : trees_) sum += tree.predict(x);
  return shrinkage_ * sum;
}

void Booster::accumulate_gradient(std::span<const double> x, double scale,
                                  std::span<double> grad) const {
  if (x.size() != input_dim_ || grad.size() != input_dim_) {
    fail(ErrorCode::DimensionMismatch, "booster gradient dimension mismatch");
  }
  for (const DecisionTree& tree : trees_) tree.accumulate_gradient(x, scale * shrinkage_, grad);
}

Booster fit_booster(const Matrix& x, std::span<const double> targets, const BoosterParams& params) {
  if (x.rows() == 0) fail(ErrorCode::EmptyInput, "fit_booster on zero samples");
  return fit_booster(x, SortedColumns(x), targets, params);
}

Booster fit_booster(const Matrix& x, const SortedColumns& sorted, std::span<const double> targets,
                    const BoosterParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  if (n == 0) fail(ErrorCode::EmptyInput, "fit_booster on zero samples");
  if (targets.size() != n) fail(ErrorCode::DimensionMismatch, "fit_booster: targets length");

  Vector prediction(n, 0.0);
  Vector residual(n);
  std::vector<DecisionTree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_boosters));
  for (int t = 0; t < params.n_boosters; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = targets[i] - prediction[i];
    DecisionTree tree = fit_tree(x, sorted, residual, params.tree);
    for (std::size_t i = 0; i < n; ++i) prediction[i] += params.shrinkage * tree.predict(x.row(i));
    trees.push_back(std::move(tree));
  }
  return Booster(std::move(trees), params.shrinkage, x.cols());
}

double predict_booster(const Booster& booster, std::span<const double> x) {
  return booster.predict(x);
}

Vector booster_gradient(const Booster& booster, std::span<const double> x) {
  Vector grad(booster.input_dim(), 0.0);
  booster.accumulate_gradient(x, 1.0, grad);
  return grad;
}

}  // namespace gbdtbp
