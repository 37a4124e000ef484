#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gbdtbp/booster.hpp"
#include "gbdtbp/numeric.hpp"

namespace gbdtbp {

enum class Activation { Relu, Identity };
enum class LossKind { Mse, SoftmaxCrossEntropy };
enum class MetricKind { Rmse, Accuracy };

// One output dimension per booster; every booster reads the full input.
struct GbdtLayer {
  BoosterParams params;
  std::vector<Booster> boosters;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

// activation(weights * x + bias), trained by full-batch gradient steps.
struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
  Activation activation = Activation::Relu;
  double sgd_lr = 0.01;
  int sgd_steps = 15;
};

using Layer = std::variant<GbdtLayer, DenseLayer>;

std::size_t layer_in_dim(const Layer& layer);
std::size_t layer_out_dim(const Layer& layer);

Matrix apply_layer(const Layer& layer, const Matrix& input);
Vector apply_layer(const Layer& layer, std::span<const double> x);

// out x in Jacobian at x. For relu, the derivative at a pre-activation of
// exactly 0 is taken as 0.
Matrix layer_jacobian(const Layer& layer, std::span<const double> x);

// J(x)^T g without materializing J.
Vector layer_vjp(const Layer& layer, std::span<const double> x, std::span<const double> g);

// True when every tree in a GBDT layer has constant leaves, i.e. the layer's
// Jacobian is identically zero.
bool layer_is_constant(const Layer& layer);

// Replaces a GBDT layer's boosters with ones fitted from scratch to
// (input, target column j); a dense layer takes sgd_steps full-batch steps on
// the mean squared error to `target`, continuing from its current weights.
void refit_layer(Layer& layer, const Matrix& input, const Matrix& target);

// Mean squared error of a dense layer's output against `target`.
double dense_mse(const DenseLayer& layer, const Matrix& input, const Matrix& target);

struct LayerStack {
  std::vector<Layer> layers;
  LossKind loss = LossKind::Mse;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Matrix gradient;  // d(loss)/d(predictions)
};

// mse: mean over all entries of (pred - y)^2, gradient 2 (pred - y) / (n d).
// softmax_ce: mean row cross-entropy of softmax(pred), gradient
// (softmax(pred) - y) / n. Rows of y must be one-hot for softmax_ce. With a
// single column the logits are taken as [0, z] against a 0/1 label, which is
// the logistic loss with gradient (sigmoid(z) - y) / n.
LossResult loss_and_gradient(const Matrix& predictions, const Matrix& y, LossKind loss);

// Returns h_1..h_L.
std::vector<Matrix> forward(const LayerStack& stack, const Matrix& h0);

// Returns g_0..g_L with g_L = grad_last and
// g_{i-1} row r = layer_i'(h_{i-1} row r)^T g_i row r. `hiddens` is the
// output of forward() on the same h0.
std::vector<Matrix> backward(const LayerStack& stack, const Matrix& h0,
                             const std::vector<Matrix>& hiddens, const Matrix& grad_last);

// mu * m + (1 - mu) * g
Matrix momentum_update(const Matrix& m, const Matrix& g, double mu);
// h - alpha * m
Matrix update_hidden(const Matrix& h, const Matrix& m, double alpha);

struct GbdtLayerSpec {
  BoosterParams params;
};

struct DenseLayerSpec {
  Activation activation = Activation::Relu;
  double sgd_lr = 0.01;
  int sgd_steps = 15;
};

using LayerSpec = std::variant<GbdtLayerSpec, DenseLayerSpec>;

// How the loss gradient handed to the hidden updates is scaled. PerSample
// differentiates the summed per-row loss, so each row's hidden variables
// move by the same amount regardless of n; Mean differentiates the mean loss.
enum class GradientScale { PerSample, Mean };

struct TrainConfig {
  std::vector<std::size_t> widths;  // d_0 .. d_L
  std::vector<LayerSpec> layers;    // L entries
  double alpha = 0.5;
  double mu = 0.5;
  int epochs = 60;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::Mse;
  MetricKind metric = MetricKind::Rmse;
  double init_std = 1.0;
  GradientScale gradient_scale = GradientScale::PerSample;

  void validate() const;
};

// Layers with the configured shapes; dense weights drawn N(0, 1/fan_in).
// GBDT layers start empty and are fitted by train().
LayerStack build_stack(const TrainConfig& config, Rng& rng);

// Accuracy on a single logit column (softmax_ce) thresholds at 0, on a single
// regression-style column (mse) at 0.5.
double evaluate_metric(const Matrix& predictions, const Matrix& y, MetricKind metric,
                       LossKind loss);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double metric = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<Matrix> hidden;    // h_1..h_L: forward of the final stack
  std::vector<Matrix> momentum;  // m_1..m_L
};

// Hooks for instrumentation and hidden dumps. Layer indices are 1-based:
// layer i maps h_{i-1} to h_i.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  // hiddens = h_1..h_L at the start of epoch `epoch`, before any update.
  virtual void on_epoch_begin(int /*epoch*/, const std::vector<Matrix>& /*hiddens*/) {}
  virtual void on_refit(int /*epoch*/, std::size_t /*layer*/, const Matrix& /*input*/,
                        const Matrix& /*target*/) {}
  // Called after the initial fit (epoch 0) and after every epoch with the
  // forward pass of the refitted stack.
  virtual void on_epoch_end(int /*epoch*/, const LayerStack& /*stack*/,
                            const std::vector<Matrix>& /*hiddens*/) {}
};

TrainResult train(LayerStack& stack, const Matrix& h0, const Matrix& y, const TrainConfig& config,
                  Rng& rng, TrainObserver* observer = nullptr);

std::string to_string(Activation activation);
std::string to_string(LossKind loss);
std::string to_string(MetricKind metric);
std::string to_string(LeafMode mode);
std::string to_string(GradientScale scale);
Activation parse_activation(const std::string& name);
LossKind parse_loss(const std::string& name);
MetricKind parse_metric(const std::string& name);
LeafMode parse_leaf_mode(const std::string& name);
GradientScale parse_gradient_scale(const std::string& name);

}  // namespace gbdtbp
