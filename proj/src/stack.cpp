#include "gbdtbp/stack.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "gbdtbp/error.hpp"
#include "gbdtbp/metrics.hpp"

namespace gbdtbp {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
             std::to_string(b.cols()));
  }
}

void require_input(const Layer& layer, std::size_t size) {
  if (size != layer_in_dim(layer)) {
    fail(ErrorCode::DimensionMismatch, "layer expects " + std::to_string(layer_in_dim(layer)) +
                                           " inputs, got " + std::to_string(size));
  }
}

void require_fitted(const GbdtLayer& layer) {
  if (layer.boosters.size() != layer.out_dim) {
    fail(ErrorCode::InvalidArgument, "GBDT layer has not been fitted");
  }
}

double activate(Activation activation, double z) {
  return activation == Activation::Relu ? std::max(z, 0.0) : z;
}

double activation_slope(Activation activation, double z) {
  if (activation == Activation::Identity) return 1.0;
  return z > 0.0 ? 1.0 : 0.0;
}

// Pre-activations weights * x + bias.
void dense_preactivation(const DenseLayer& layer, std::span<const double> x, std::span<double> z) {
  for (std::size_t o = 0; o < layer.weights.rows(); ++o) {
    z[o] = layer.bias[o] + dot(layer.weights.row(o), x);
  }
}

void dense_sgd_step(DenseLayer& layer, const Matrix& input, const Matrix& target) {
  const std::size_t n = input.rows();
  const std::size_t out = layer.weights.rows();
  const std::size_t in = layer.weights.cols();
  Matrix grad_w(out, in);
  Vector grad_b(out, 0.0);
  Vector z(out);
  const double scale = 2.0 / static_cast<double>(n * out);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = input.row(r);
    dense_preactivation(layer, x, z);
    for (std::size_t o = 0; o < out; ++o) {
      const double a = activate(layer.activation, z[o]);
      const double delta = scale * (a - target(r, o)) * activation_slope(layer.activation, z[o]);
      if (delta == 0.0) continue;
      grad_b[o] += delta;
      auto gw = grad_w.row(o);
      for (std::size_t c = 0; c < in; ++c) gw[c] += delta * x[c];
    }
  }
  for (std::size_t o = 0; o < out; ++o) {
    layer.bias[o] -= layer.sgd_lr * grad_b[o];
    auto w = layer.weights.row(o);
    auto gw = grad_w.row(o);
    for (std::size_t c = 0; c < in; ++c) w[c] -= layer.sgd_lr * gw[c];
  }
}

}  // namespace

std::size_t layer_in_dim(const Layer& layer) {
  return std::visit(Overloaded{[](const GbdtLayer& g) { return g.in_dim; },
                               [](const DenseLayer& d) { return d.weights.cols(); }},
                    layer);
}

std::size_t layer_out_dim(const Layer& layer) {
  return std::visit(Overloaded{[](const GbdtLayer& g) { return g.out_dim; },
                               [](const DenseLayer& d) { return d.weights.rows(); }},
                    layer);
}

Vector apply_layer(const Layer& layer, std::span<const double> x) {
  require_input(layer, x.size());
  Vector out(layer_out_dim(layer));
  std::visit(Overloaded{[&](const GbdtLayer& g) {
                          require_fitted(g);
                          for (std::size_t j = 0; j < g.out_dim; ++j) {
                            out[j] = g.boosters[j].predict(x);
                          }
                        },
                        [&](const DenseLayer& d) {
                          dense_preactivation(d, x, out);
                          for (double& v : out) v = activate(d.activation, v);
                        }},
             layer);
  return out;
}

Matrix apply_layer(const Layer& layer, const Matrix& input) {
  require_input(layer, input.cols());
  Matrix out(input.rows(), layer_out_dim(layer));
  for (std::size_t r = 0; r < input.rows(); ++r) {
    const Vector v = apply_layer(layer, input.row(r));
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

Matrix layer_jacobian(const Layer& layer, std::span<const double> x) {
  require_input(layer, x.size());
  Matrix jac(layer_out_dim(layer), layer_in_dim(layer));
  std::visit(Overloaded{[&](const GbdtLayer& g) {
                          require_fitted(g);
                          for (std::size_t j = 0; j < g.out_dim; ++j) {
                            g.boosters[j].accumulate_gradient(x, 1.0, jac.row(j));
                          }
                        },
                        [&](const DenseLayer& d) {
                          Vector z(d.weights.rows());
                          dense_preactivation(d, x, z);
                          for (std::size_t o = 0; o < z.size(); ++o) {
                            const double slope = activation_slope(d.activation, z[o]);
                            auto w = d.weights.row(o);
                            auto row = jac.row(o);
                            for (std::size_t c = 0; c < w.size(); ++c) row[c] = slope * w[c];
                          }
                        }},
             layer);
  return jac;
}

Vector layer_vjp(const Layer& layer, std::span<const double> x, std::span<const double> g) {
  require_input(layer, x.size());
  if (g.size() != layer_out_dim(layer)) {
    fail(ErrorCode::DimensionMismatch, "layer_vjp: gradient length mismatch");
  }
  Vector out(layer_in_dim(layer), 0.0);
  std::visit(Overloaded{[&](const GbdtLayer& gl) {
                          require_fitted(gl);
                          for (std::size_t j = 0; j < gl.out_dim; ++j) {
                            if (g[j] != 0.0) gl.boosters[j].accumulate_gradient(x, g[j], out);
                          }
                        },
                        [&](const DenseLayer& d) {
                          Vector z(d.weights.rows());
                          dense_preactivation(d, x, z);
                          for (std::size_t o = 0; o < z.size(); ++o) {
                            const double delta = g[o] * activation_slope(d.activation, z[o]);
                            if (delta == 0.0) continue;
                            auto w = d.weights.row(o);
                            for (std::size_t c = 0; c < w.size(); ++c) out[c] += delta * w[c];
                          }
                        }},
             layer);
  return out;
}

bool layer_is_constant(const Layer& layer) {
  const auto* g = std::get_if<GbdtLayer>(&layer);
  if (g == nullptr) return false;
  for (const Booster& b : g->boosters) {
    for (const DecisionTree& t : b.trees()) {
      for (const LeafModel& leaf : t.leaves()) {
        if (leaf.mode != LeafMode::Constant) return false;
      }
    }
  }
  return true;
}

double dense_mse(const DenseLayer& layer, const Matrix& input, const Matrix& target) {
  const Matrix out = apply_layer(Layer(layer), input);
  require_same_shape(out, target, "dense_mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const double e = out.data()[i] - target.data()[i];
    sum += e * e;
  }
  return sum / static_cast<double>(out.data().size());
}

void refit_layer(Layer& layer, const Matrix& input, const Matrix& target) {
  require_input(layer, input.cols());
  if (target.rows() != input.rows() || target.cols() != layer_out_dim(layer)) {
    fail(ErrorCode::DimensionMismatch, "refit_layer: target shape mismatch");
  }
  std::visit(Overloaded{[&](GbdtLayer& g) {
                          const SortedColumns sorted(input);
                          std::vector<Booster> boosters;
                          boosters.reserve(g.out_dim);
                          for (std::size_t j = 0; j < g.out_dim; ++j) {
                            const Vector column = target.column(j);
                            boosters.push_back(fit_booster(input, sorted, column, g.params));
                          }
                          g.boosters = std::move(boosters);
                        },
                        [&](DenseLayer& d) {
                          for (int s = 0; s < d.sgd_steps; ++s) dense_sgd_step(d, input, target);
                        }},
             layer);
}

std::size_t LayerStack::input_dim() const {
  return layers.empty() ? 0 : layer_in_dim(layers.front());
}

std::size_t LayerStack::output_dim() const {
  return layers.empty() ? 0 : layer_out_dim(layers.back());
}

void LayerStack::validate() const {
  if (layers.empty()) fail(ErrorCode::InvalidArgument, "stack has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i > 0 && layer_in_dim(layers[i]) != layer_out_dim(layers[i - 1])) {
      fail(ErrorCode::DimensionMismatch,
           "layer " + std::to_string(i + 1) + " input does not match previous output");
    }
    if (const auto* g = std::get_if<GbdtLayer>(&layers[i])) {
      if (!g->boosters.empty() && g->boosters.size() != g->out_dim) {
        fail(ErrorCode::InvalidArgument, "GBDT layer booster count != out_dim");
      }
      for (const Booster& b : g->boosters) {
        if (b.input_dim() != g->in_dim) {
          fail(ErrorCode::DimensionMismatch, "booster input_dim != layer in_dim");
        }
      }
    } else {
      const auto& d = std::get<DenseLayer>(layers[i]);
      if (d.bias.size() != d.weights.rows()) {
        fail(ErrorCode::DimensionMismatch, "dense bias length != output width");
      }
    }
  }
}

LossResult loss_and_gradient(const Matrix& predictions, const Matrix& y, LossKind loss) {
  require_same_shape(predictions, y, "loss_and_gradient");
  const std::size_t n = predictions.rows();
  const std::size_t d = predictions.cols();
  if (n == 0 || d == 0) fail(ErrorCode::EmptyInput, "loss on empty predictions");
  LossResult result;
  result.gradient = Matrix(n, d);
  if (loss == LossKind::Mse) {
    const double scale = 2.0 / static_cast<double>(n * d);
    double sum = 0.0;
    for (std::size_t i = 0; i < n * d; ++i) {
      const double e = predictions.data()[i] - y.data()[i];
      sum += e * e;
      result.gradient.data()[i] = scale * e;
    }
    result.loss = sum / static_cast<double>(n * d);
    return result;
  }

  double total = 0.0;
  if (d == 1) {
    // Two-class softmax over logits [0, z]: the logistic loss on a 0/1 label.
    for (std::size_t r = 0; r < n; ++r) {
      const double t = y(r, 0);
      if (t != 0.0 && t != 1.0) fail(ErrorCode::InvalidOneHot, "binary target must be 0 or 1");
      const double z = predictions(r, 0);
      // log(1 + e^z) - t z, evaluated without overflow.
      total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - t * z;
      const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      result.gradient(r, 0) = (p - t) / static_cast<double>(n);
    }
    result.loss = total / static_cast<double>(n);
    return result;
  }
  Vector prob(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto target = y.row(r);
    double ones = 0.0;
    for (double v : target) {
      if (v != 0.0 && v != 1.0) fail(ErrorCode::InvalidOneHot, "target row is not one-hot");
      ones += v;
    }
    if (ones != 1.0) fail(ErrorCode::InvalidOneHot, "target row is not one-hot");
    auto z = predictions.row(r);
    const double peak = *std::max_element(z.begin(), z.end());
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      prob[c] = std::exp(z[c] - peak);
      norm += prob[c];
    }
    const double log_norm = std::log(norm) + peak;
    auto grad = result.gradient.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      if (target[c] == 1.0) total += log_norm - z[c];
      grad[c] = (prob[c] / norm - target[c]) / static_cast<double>(n);
    }
  }
  result.loss = total / static_cast<double>(n);
  return result;
}

std::vector<Matrix> forward(const LayerStack& stack, const Matrix& h0) {
  if (stack.layers.empty()) fail(ErrorCode::InvalidArgument, "stack has no layers");
  std::vector<Matrix> hiddens;
  hiddens.reserve(stack.layers.size());
  const Matrix* input = &h0;
  for (const Layer& layer : stack.layers) {
    hiddens.push_back(apply_layer(layer, *input));
    input = &hiddens.back();
  }
  return hiddens;
}

std::vector<Matrix> backward(const LayerStack& stack, const Matrix& h0,
                             const std::vector<Matrix>& hiddens, const Matrix& grad_last) {
  const std::size_t depth = stack.layers.size();
  if (hiddens.size() != depth) fail(ErrorCode::DimensionMismatch, "backward: hidden count");
  require_same_shape(hiddens.back(), grad_last, "backward");
  std::vector<Matrix> grads(depth + 1);
  grads[depth] = grad_last;
  for (std::size_t i = depth; i >= 1; --i) {
    const Matrix& input = i == 1 ? h0 : hiddens[i - 2];
    const Matrix& upstream = grads[i];
    Matrix g(input.rows(), input.cols());
    for (std::size_t r = 0; r < input.rows(); ++r) {
      const Vector row = layer_vjp(stack.layers[i - 1], input.row(r), upstream.row(r));
      std::copy(row.begin(), row.end(), g.row(r).begin());
    }
    grads[i - 1] = std::move(g);
  }
  return grads;
}

Matrix momentum_update(const Matrix& m, const Matrix& g, double mu) {
  require_same_shape(m, g, "momentum_update");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    out.data()[i] = mu * m.data()[i] + (1.0 - mu) * g.data()[i];
  }
  return out;
}

Matrix update_hidden(const Matrix& h, const Matrix& m, double alpha) {
  require_same_shape(h, m, "update_hidden");
  Matrix out(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.data().size(); ++i) {
    out.data()[i] = h.data()[i] - alpha * m.data()[i];
  }
  return out;
}

void TrainConfig::validate() const {
  if (widths.size() < 2) fail(ErrorCode::ConfigError, "widths needs at least d_0 and d_L");
  if (layers.size() + 1 != widths.size()) {
    fail(ErrorCode::ConfigError, "need exactly one layer spec per adjacent width pair");
  }
  for (std::size_t w : widths) {
    if (w == 0) fail(ErrorCode::ConfigError, "layer widths must be positive");
  }
  if (!(alpha > 0.0)) fail(ErrorCode::ConfigError, "alpha must be > 0");
  if (!(mu >= 0.0 && mu < 1.0)) fail(ErrorCode::ConfigError, "mu must lie in [0, 1)");
  if (epochs < 0) fail(ErrorCode::ConfigError, "epochs must be >= 0");
  if (!(init_std > 0.0)) fail(ErrorCode::ConfigError, "init_std must be > 0");
  for (const LayerSpec& spec : layers) {
    if (const auto* g = std::get_if<GbdtLayerSpec>(&spec)) {
      try {
        g->params.validate();
      } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
      }
    } else {
      const auto& d = std::get<DenseLayerSpec>(spec);
      if (!(d.sgd_lr > 0.0)) fail(ErrorCode::ConfigError, "sgd_lr must be > 0");
      if (d.sgd_steps < 0) fail(ErrorCode::ConfigError, "sgd_steps must be >= 0");
    }
  }
}

LayerStack build_stack(const TrainConfig& config, Rng& rng) {
  config.validate();
  LayerStack stack;
  stack.loss = config.loss;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const std::size_t in = config.widths[i];
    const std::size_t out = config.widths[i + 1];
    if (const auto* g = std::get_if<GbdtLayerSpec>(&config.layers[i])) {
      stack.layers.emplace_back(GbdtLayer{g->params, {}, in, out});
    } else {
      const auto& spec = std::get<DenseLayerSpec>(config.layers[i]);
      Rng layer_rng = rng.split(100 + i);
      DenseLayer dense;
      dense.weights = gaussian_matrix(out, in, 0.0, 1.0 / std::sqrt(static_cast<double>(in)),
                                      layer_rng);
      dense.bias.assign(out, 0.0);
      dense.activation = spec.activation;
      dense.sgd_lr = spec.sgd_lr;
      dense.sgd_steps = spec.sgd_steps;
      stack.layers.emplace_back(std::move(dense));
    }
  }
  return stack;
}

double evaluate_metric(const Matrix& predictions, const Matrix& y, MetricKind metric,
                       LossKind loss) {
  if (metric == MetricKind::Rmse) return rmse(predictions, y);
  return accuracy(predictions, y, loss == LossKind::SoftmaxCrossEntropy ? 0.0 : 0.5);
}

TrainResult train(LayerStack& stack, const Matrix& h0, const Matrix& y, const TrainConfig& config,
                  Rng& rng, TrainObserver* observer) {
  config.validate();
  stack.validate();
  const std::size_t depth = stack.layers.size();
  if (depth + 1 != config.widths.size()) {
    fail(ErrorCode::ConfigError, "stack depth does not match config widths");
  }
  if (h0.rows() == 0) fail(ErrorCode::EmptyInput, "train on zero samples");
  if (h0.cols() != stack.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(h0.cols()) +
                                           " columns, stack expects " +
                                           std::to_string(stack.input_dim()));
  }
  if (y.rows() != h0.rows() || y.cols() != stack.output_dim()) {
    fail(ErrorCode::DimensionMismatch, "target shape does not match stack output");
  }
  const std::size_t n = h0.rows();
  stack.loss = config.loss;

  // Gaussian hidden targets, then one fit of every layer onto them.
  Rng init_rng = rng.split(1);
  std::vector<Matrix> targets(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    targets[i] = gaussian_matrix(n, layer_out_dim(stack.layers[i]), 0.0, config.init_std, init_rng);
  }
  for (std::size_t i = 1; i <= depth; ++i) {
    const Matrix& input = i == 1 ? h0 : targets[i - 2];
    if (observer != nullptr) observer->on_refit(0, i, input, targets[i - 1]);
    refit_layer(stack.layers[i - 1], input, targets[i - 1]);
  }

  TrainResult result;
  for (std::size_t i = 0; i < depth; ++i) {
    result.momentum.emplace_back(n, layer_out_dim(stack.layers[i]), 0.0);
  }
  std::vector<Matrix> hiddens = forward(stack, h0);
  if (observer != nullptr) observer->on_epoch_end(0, stack, hiddens);
  const double grad_scale =
      config.gradient_scale == GradientScale::PerSample ? static_cast<double>(n) : 1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (observer != nullptr) observer->on_epoch_begin(epoch, hiddens);
    LossResult lr = loss_and_gradient(hiddens.back(), y, config.loss);
    if (!std::isfinite(lr.loss)) {
      fail(ErrorCode::NonFiniteLoss, "non-finite loss entering epoch " + std::to_string(epoch));
    }
    for (double& v : lr.gradient.data()) v *= grad_scale;
    const std::vector<Matrix> grads = backward(stack, h0, hiddens, lr.gradient);

    // Top-down alternation: h_i moves, then layer i refits from the not yet
    // updated h_{i-1}.
    for (std::size_t i = depth; i >= 1; --i) {
      Matrix& m = result.momentum[i - 1];
      m = momentum_update(m, grads[i], config.mu);
      hiddens[i - 1] = update_hidden(hiddens[i - 1], m, config.alpha);
      const Matrix& input = i == 1 ? h0 : hiddens[i - 2];
      if (observer != nullptr) observer->on_refit(epoch, i, input, hiddens[i - 1]);
      refit_layer(stack.layers[i - 1], input, hiddens[i - 1]);
    }

    hiddens = forward(stack, h0);
    EpochRecord record;
    record.epoch = epoch;
    record.loss = loss_and_gradient(hiddens.back(), y, config.loss).loss;
    if (!std::isfinite(record.loss)) {
      fail(ErrorCode::NonFiniteLoss, "non-finite loss after epoch " + std::to_string(epoch));
    }
    record.metric = evaluate_metric(hiddens.back(), y, config.metric, config.loss);
    result.history.push_back(record);
    if (observer != nullptr) observer->on_epoch_end(epoch, stack, hiddens);
  }
  result.hidden = std::move(hiddens);
  return result;
}

std::string to_string(Activation activation) {
  return activation == Activation::Relu ? "relu" : "identity";
}

std::string to_string(LossKind loss) { return loss == LossKind::Mse ? "mse" : "softmax_ce"; }

std::string to_string(MetricKind metric) {
  return metric == MetricKind::Rmse ? "rmse" : "accuracy";
}

std::string to_string(LeafMode mode) { return mode == LeafMode::Linear ? "linear" : "constant"; }

std::string to_string(GradientScale scale) {
  return scale == GradientScale::PerSample ? "per_sample" : "mean";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  fail(ErrorCode::ConfigError, "unknown activation '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "softmax_ce") return LossKind::SoftmaxCrossEntropy;
  fail(ErrorCode::ConfigError, "unknown loss '" + name + "'");
}

MetricKind parse_metric(const std::string& name) {
  if (name == "rmse") return MetricKind::Rmse;
  if (name == "accuracy") return MetricKind::Accuracy;
  fail(ErrorCode::ConfigError, "unknown metric '" + name + "'");
}

LeafMode parse_leaf_mode(const std::string& name) {
  if (name == "linear") return LeafMode::Linear;
  if (name == "constant") return LeafMode::Constant;
  fail(ErrorCode::ConfigError, "unknown leaf mode '" + name + "'");
}

GradientScale parse_gradient_scale(const std::string& name) {
  if (name == "per_sample") return GradientScale::PerSample;
  if (name == "mean") return GradientScale::Mean;
  fail(ErrorCode::ConfigError, "unknown gradient scale '" + name + "'");
}

}  // namespace gbdtbp
