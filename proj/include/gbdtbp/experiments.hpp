#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbdtbp/config.hpp"
#include "gbdtbp/datasets.hpp"
#include "gbdtbp/stack.hpp"

namespace gbdtbp {

struct TrainedModel {
  LayerStack stack;
  TrainResult result;
};

// Builds the configured stack (seeded by config.train.seed) and trains it.
TrainedModel train_model(const TrainConfig& config, const Dataset& data,
                         TrainObserver* observer = nullptr);

// Output of the last layer.
Matrix predict(const LayerStack& stack, const Matrix& x);

// Identifies the smooth piece of the stack containing x: the reached leaf of
// every tree and the sign of every relu pre-activation.
std::vector<std::int64_t> piece_signature(const LayerStack& stack, std::span<const double> x);

struct GradcheckReport {
  std::size_t points_checked = 0;
  std::size_t points_rejected = 0;
  double max_abs_error = 0.0;
  bool analytic_all_zero = true;
  std::vector<std::size_t> zero_jacobian_layers;  // 1-based
  double tolerance = 0.0;
  bool passed = false;
};

// Compares back-propagated input gradients of s(x) = c . stack(x) (c random)
// with central differences at points drawn uniformly from the bounding box
// of `reference`. A point is kept only if it lies more than eps from every
// first-layer split threshold and every probe x +- eps e_j shares its piece
// signature.
GradcheckReport gradcheck_stack(const LayerStack& stack, const Matrix& reference,
                                const GradcheckSettings& settings, Rng& rng);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double train_metric = 0.0;
  double test_metric = 0.0;
};

struct CvReport {
  MetricKind metric = MetricKind::Rmse;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over folds
};

CvReport run_cv(const RunConfig& config, const Dataset& data);

// "0.6186 ± 0.0296"
std::string format_mean_std(double mean, double std, int digits = 4);

// Seed for fold `fold` derived from the master training seed.
std::uint64_t fold_seed(std::uint64_t master, std::size_t fold);

// Test RMSE of a single-layer booster after each of 1..n_boosters trees.
std::vector<double> booster_test_curve(const Matrix& x_train, std::span<const double> y_train,
                                       const Matrix& x_test, std::span<const double> y_test,
                                       const BoosterParams& params);

}  // namespace gbdtbp
