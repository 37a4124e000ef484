#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gbdtbp/numeric.hpp"
#include "gbdtbp/tree.hpp"

namespace gbdtbp {

struct BoosterParams {
  int n_boosters = 8;
  double shrinkage = 0.25;
  TreeParams tree;

  void validate() const;
};

// Scalar-output ensemble: shrinkage * sum of member tree predictions.
class Booster {
 public:
  Booster() = default;
  Booster(std::vector<DecisionTree> trees, double shrinkage, std::size_t input_dim);

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  double shrinkage() const noexcept { return shrinkage_; }
  std::size_t input_dim() const noexcept { return input_dim_; }

  double predict(std::span<const double> x) const;
  // grad += scale * d(predict)/dx
  void accumulate_gradient(std::span<const double> x, double scale, std::span<double> grad) const;

  friend bool operator==(const Booster&, const Booster&) = default;

 private:
  std::vector<DecisionTree> trees_;
  double shrinkage_ = 1.0;
  std::size_t input_dim_ = 0;
};

// Gradient boosting on squared error starting from a zero prediction; each
// tree fits the current residual targets - prediction.
Booster fit_booster(const Matrix& x, std::span<const double> targets, const BoosterParams& params);
Booster fit_booster(const Matrix& x, const SortedColumns& sorted, std::span<const double> targets,
                    const BoosterParams& params);

double predict_booster(const Booster& booster, std::span<const double> x);
Vector booster_gradient(const Booster& booster, std::span<const double> x);

}  // namespace gbdtbp
