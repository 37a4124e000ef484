#include "gbdtbp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gbdtbp/error.hpp"
#include "gbdtbp/metrics.hpp"

namespace gbdtbp {

TrainedModel train_model(const TrainConfig& config, const Dataset& data, TrainObserver* observer) {
  config.validate();
  if (config.widths.front() != data.x.cols()) {
    fail(ErrorCode::DimensionMismatch, "model input width " +
                                           std::to_string(config.widths.front()) +
                                           " != dataset features " +
                                           std::to_string(data.x.cols()));
  }
  if (config.widths.back() != data.y.cols()) {
    fail(ErrorCode::DimensionMismatch, "model output width " +
                                           std::to_string(config.widths.back()) +
                                           " != dataset targets " + std::to_string(data.y.cols()));
  }
  Rng rng(config.seed);
  TrainedModel model;
  model.stack = build_stack(config, rng);
  model.result = train(model.stack, data.x, data.y, config, rng, observer);
  return model;
}

Matrix predict(const LayerStack& stack, const Matrix& x) {
  std::vector<Matrix> hiddens = forward(stack, x);
  return std::move(hiddens.back());
}

std::vector<std::int64_t> piece_signature(const LayerStack& stack, std::span<const double> x) {
  std::vector<std::int64_t> signature;
  Vector input(x.begin(), x.end());
  for (const Layer& layer : stack.layers) {
    if (const auto* g = std::get_if<GbdtLayer>(&layer)) {
      for (const Booster& b : g->boosters) {
        for (const DecisionTree& t : b.trees()) {
          signature.push_back(static_cast<std::int64_t>(t.leaf_index(input)));
        }
      }
    } else {
      const auto& d = std::get<DenseLayer>(layer);
      if (d.activation == Activation::Relu) {
        for (std::size_t o = 0; o < d.weights.rows(); ++o) {
          signature.push_back(d.bias[o] + dot(d.weights.row(o), input) > 0.0 ? 1 : 0);
        }
      }
    }
    input = apply_layer(layer, input);
  }
  return signature;
}

GradcheckReport gradcheck_stack(const LayerStack& stack, const Matrix& reference,
                                const GradcheckSettings& settings, Rng& rng) {
  stack.validate();
  if (reference.rows() == 0 || reference.cols() != stack.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "gradcheck reference inputs do not match the stack");
  }
  const std::size_t d = reference.cols();
  const double eps = settings.eps;
  Vector lo(d, std::numeric_limits<double>::infinity());
  Vector hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < reference.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      lo[c] = std::min(lo[c], reference(r, c));
      hi[c] = std::max(hi[c], reference(r, c));
    }
  }

  GradcheckReport report;
  report.tolerance = settings.tolerance;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    if (layer_is_constant(stack.layers[i])) report.zero_jacobian_layers.push_back(i + 1);
  }

  Vector weights(stack.output_dim());
  for (double& w : weights) w = rng.normal();
  auto scalar = [&](std::span<const double> x) {
    Vector h(x.begin(), x.end());
    for (const Layer& layer : stack.layers) h = apply_layer(layer, h);
    return dot(weights, h);
  };
  Matrix grad_out(1, weights.size());
  std::copy(weights.begin(), weights.end(), grad_out.row(0).begin());

  const auto* first_gbdt = std::get_if<GbdtLayer>(&stack.layers.front());
  const std::size_t max_attempts = std::max<std::size_t>(1000, 200 * settings.points);
  Vector x(d);
  for (std::size_t attempt = 0;
       attempt < max_attempts && report.points_checked < settings.points; ++attempt) {
    for (std::size_t c = 0; c < d; ++c) x[c] = rng.uniform(lo[c], hi[c]);

    bool interior = true;
    if (first_gbdt != nullptr) {
      for (const Booster& b : first_gbdt->boosters) {
        for (const DecisionTree& t : b.trees()) {
          interior = interior && t.min_threshold_distance(x) > eps;
        }
      }
    }
    if (interior) {
      const auto base = piece_signature(stack, x);
      Vector probe = x;
      for (std::size_t c = 0; c < d && interior; ++c) {
        for (double step : {eps, -eps}) {
          probe[c] = x[c] + step;
          interior = interior && piece_signature(stack, probe) == base;
        }
        probe[c] = x[c];
      }
    }
    if (!interior) {
      ++report.points_rejected;
      continue;
    }

    Matrix h0(1, d);
    std::copy(x.begin(), x.end(), h0.row(0).begin());
    const auto hiddens = forward(stack, h0);
    const auto grads = backward(stack, h0, hiddens, grad_out);
    const Vector numeric = finite_diff_gradient(scalar, x, eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double analytic = grads[0](0, c);
      report.analytic_all_zero = report.analytic_all_zero && analytic == 0.0;
      report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic - numeric[c]));
    }
    ++report.points_checked;
  }
  report.passed = report.points_checked == settings.points &&
                  report.max_abs_error <= settings.tolerance;
  return report;
}

std::uint64_t fold_seed(std::uint64_t master, std::size_t fold) {
  return Rng(master).split(0xf01d0000ULL + fold).next_u64();
}

CvReport run_cv(const RunConfig& config, const Dataset& data) {
  if (config.cv.folds < 2) fail(ErrorCode::InvalidK, "cross-validation needs k >= 2");
  const FoldPlan plan = kfold(data.rows(), config.cv.folds, config.cv.seed);
  CvReport report;
  report.metric = config.train.metric;
  double sum = 0.0;
  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    const Dataset train_set = data.subset(plan.train_rows(fold));
    const Dataset test_set = data.subset(plan.test_rows(fold));
    TrainConfig fold_config = config.train;
    fold_config.seed = fold_seed(config.train.seed, fold);
    const TrainedModel model = train_model(fold_config, train_set);
    FoldResult result;
    result.fold = fold;
    result.train_rows = train_set.rows();
    result.test_rows = test_set.rows();
    result.train_metric =
        evaluate_metric(predict(model.stack, train_set.x), train_set.y, report.metric,
                        config.train.loss);
    result.test_metric =
        evaluate_metric(predict(model.stack, test_set.x), test_set.y, report.metric,
                        config.train.loss);
    sum += result.test_metric;
    report.folds.push_back(result);
  }
  report.mean = sum / static_cast<double>(plan.k);
  double var = 0.0;
  for (const FoldResult& f : report.folds) var += (f.test_metric - report.mean) * (f.test_metric - report.mean);
  report.std = std::sqrt(var / static_cast<double>(plan.k));
  return report;
}

std::string format_mean_std(double mean, double std, int digits) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", digits, mean, digits, std);
  return buf;
}

std::vector<double> booster_test_curve(const Matrix& x_train, std::span<const double> y_train,
                                       const Matrix& x_test, std::span<const double> y_test,
                                       const BoosterParams& params) {
  if (y_test.size() != x_test.rows()) fail(ErrorCode::DimensionMismatch, "test targets length");
  const Booster booster = fit_booster(x_train, y_train, params);
  Vector prediction(x_test.rows(), 0.0);
  std::vector<double> curve;
  curve.reserve(booster.trees().size());
  for (const DecisionTree& tree : booster.trees()) {
    double sse = 0.0;
    for (std::size_t r = 0; r < x_test.rows(); ++r) {
      prediction[r] += booster.shrinkage() * tree.predict(x_test.row(r));
      const double e = prediction[r] - y_test[r];
      sse += e * e;
    }
    curve.push_back(std::sqrt(sse / static_cast<double>(x_test.rows())));
  }
  return curve;
}

}  // namespace gbdtbp
