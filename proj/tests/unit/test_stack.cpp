#include <cmath>

#include "doctest.h"
#include "gbdtbp/datasets.hpp"
#include "gbdtbp/error.hpp"
#include "gbdtbp/experiments.hpp"
#include "gbdtbp/stack.hpp"

using namespace gbdtbp;

namespace {

Booster constant_booster(double v, std::size_t dim, double shrinkage = 1.0) {
  LeafModel leaf;
  leaf.constant_value = v;
  return Booster({DecisionTree({TreeNode{-1, 0.0, -1, -1, 0}}, {leaf}, dim)}, shrinkage, dim);
}

DenseLayer dense(Matrix w, Vector b, Activation act) {
  DenseLayer d;
  d.weights = std::move(w);
  d.bias = std::move(b);
  d.activation = act;
  return d;
}

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(n, d);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

GbdtLayerSpec gbdt_spec(int boosters, int depth, double shrinkage = 0.5) {
  GbdtLayerSpec s;
  s.params.n_boosters = boosters;
  s.params.shrinkage = shrinkage;
  s.params.tree.max_depth = depth;
  return s;
}

// Fits each GBDT layer of a stack to smooth random targets.
LayerStack fitted_stack(const std::vector<std::size_t>& widths, int boosters, int depth,
                        LeafMode mode, Rng& rng) {
  TrainConfig c;
  c.widths = widths;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    GbdtLayerSpec s = gbdt_spec(boosters, depth);
    s.params.tree.leaf_mode = mode;
    c.layers.push_back(s);
  }
  LayerStack stack = build_stack(c, rng);
  Matrix input = random_matrix(200, widths[0], rng);
  for (Layer& layer : stack.layers) {
    Matrix target(input.rows(), layer_out_dim(layer));
    for (std::size_t r = 0; r < input.rows(); ++r)
      for (std::size_t o = 0; o < target.cols(); ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < input.cols(); ++k) s += std::sin((o + 1.0) * input(r, k) + k);
        target(r, o) = s;
      }
    refit_layer(layer, input, target);
    input = apply_layer(layer, input);
  }
  return stack;
}

double min_room(const LayerStack& stack, std::span<const double> x) {
  // Distance from every tree's thresholds along the forward path.
  double room = INFINITY;
  Vector h(x.begin(), x.end());
  for (const Layer& layer : stack.layers) {
    if (const auto* g = std::get_if<GbdtLayer>(&layer)) {
      for (const Booster& b : g->boosters)
        for (const DecisionTree& t : b.trees()) room = std::min(room, t.min_threshold_distance(h));
    }
    h = apply_layer(layer, h);
  }
  return room;
}

}  // namespace

TEST_CASE("loss_and_gradient: mse at the target is zero") {
  const Matrix y = Matrix::from_rows({{1, 2}, {3, 4}});
  const LossResult r = loss_and_gradient(y, y, LossKind::Mse);
  CHECK(r.loss == 0.0);
  for (double g : r.gradient.data()) CHECK(g == 0.0);
}

TEST_CASE("loss_and_gradient: uniform softmax") {
  const LossResult r = loss_and_gradient(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0}}),
                                         LossKind::SoftmaxCrossEntropy);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(r.gradient(0, 0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(r.gradient(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("loss_and_gradient: gradients match finite differences") {
  Rng rng(4);
  for (LossKind kind : {LossKind::Mse, LossKind::SoftmaxCrossEntropy}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix pred = random_matrix(4, 3, rng);
      Matrix y = random_matrix(4, 3, rng);
      if (kind == LossKind::SoftmaxCrossEntropy) {
        y = Matrix(4, 3, 0.0);
        for (std::size_t r = 0; r < 4; ++r) y(r, rng.below(3)) = 1.0;
      }
      const LossResult lr = loss_and_gradient(pred, y, kind);
      const Vector numeric = finite_diff_gradient(
          [&](std::span<const double> p) {
            return loss_and_gradient(Matrix(4, 3, Vector(p.begin(), p.end())), y, kind).loss;
          },
          pred.data(), 1e-6);
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        CHECK(std::abs(numeric[i] - lr.gradient.data()[i]) < 1e-6);
      }
    }
  }
}

TEST_CASE("loss_and_gradient: binary logistic form on one column") {
  const Matrix z = Matrix::from_rows({{0.0}, {2.0}, {-50.0}});
  const Matrix t = Matrix::from_rows({{1.0}, {0.0}, {1.0}});
  const LossResult r = loss_and_gradient(z, t, LossKind::SoftmaxCrossEntropy);
  const double expected = (std::log(2.0) + std::log1p(std::exp(2.0)) + 50.0 + std::log1p(std::exp(-50.0))) / 3;
  CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.gradient(0, 0) == doctest::Approx(-0.5 / 3).epsilon(1e-12));
  // Agrees with the two-column softmax over [0, z].
  const Matrix two = Matrix::from_rows({{0.0, 2.0}});
  const LossResult ref = loss_and_gradient(two, Matrix::from_rows({{1.0, 0.0}}),
                                           LossKind::SoftmaxCrossEntropy);
  const LossResult one = loss_and_gradient(Matrix::from_rows({{2.0}}), Matrix::from_rows({{0.0}}),
                                           LossKind::SoftmaxCrossEntropy);
  CHECK(one.loss == doctest::Approx(ref.loss).epsilon(1e-14));
  CHECK(one.gradient(0, 0) == doctest::Approx(ref.gradient(0, 1)).epsilon(1e-14));
}

TEST_CASE("loss_and_gradient: errors") {
  const Matrix a(2, 2);
  try {
    loss_and_gradient(a, Matrix(2, 3), LossKind::Mse);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  try {
    loss_and_gradient(a, Matrix::from_rows({{1, 1}, {0, 1}}), LossKind::SoftmaxCrossEntropy);
    FAIL("expected InvalidOneHot");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidOneHot);
  }
  CHECK_THROWS_AS(
      loss_and_gradient(Matrix(1, 1), Matrix::from_rows({{0.5}}), LossKind::SoftmaxCrossEntropy),
      Error);
}

TEST_CASE("forward: constant booster layer and identity dense layer") {
  LayerStack s;
  s.layers.emplace_back(GbdtLayer{{}, {constant_booster(5, 2)}, 2, 1});
  const auto h = forward(s, Matrix::from_rows({{1, 2}, {-3, 0.5}, {0, 0}}));
  REQUIRE(h.size() == 1);
  for (double v : h[0].data()) CHECK(v == 5.0);

  LayerStack id;
  id.layers.emplace_back(dense(Matrix::identity(3), Vector(3, 0.0), Activation::Identity));
  const Matrix x = Matrix::from_rows({{1, -2, 3}, {0.5, 0.25, -1}});
  CHECK(forward(id, x)[0] == x);
}

TEST_CASE("forward: two-layer output equals manual composition") {
  Rng rng(6);
  LayerStack s = fitted_stack({3, 2, 1}, 2, 2, LeafMode::Linear, rng);
  s.layers.insert(s.layers.begin() + 1,
                  dense(Matrix::from_rows({{0.5, -1}, {2, 0.25}}), Vector{0.1, -0.2}, Activation::Relu));
  const Matrix x = random_matrix(10, 3, rng);
  const auto h = forward(s, x);
  for (std::size_t r = 0; r < 10; ++r) {
    Vector v(x.row(r).begin(), x.row(r).end());
    for (const Layer& layer : s.layers) v = apply_layer(layer, v);
    CHECK(h.back()(r, 0) == v[0]);
  }
  CHECK_THROWS_AS(forward(s, Matrix(2, 4)), Error);
}

TEST_CASE("layer_jacobian: shapes, constant layers, dense layers") {
  Rng rng(7);
  GbdtLayer flat{{}, {constant_booster(1, 3), constant_booster(2, 3)}, 3, 2};
  const Matrix jz = layer_jacobian(flat, std::vector<double>{0.1, 0.2, 0.3});
  CHECK(jz.rows() == 2);
  CHECK(jz.cols() == 3);
  for (double v : jz.data()) CHECK(v == 0.0);
  CHECK(layer_is_constant(flat));

  const Matrix w = Matrix::from_rows({{1, 2, 3}, {-1, 0.5, 4}});
  const DenseLayer lin = dense(w, Vector{0, 0}, Activation::Identity);
  CHECK(layer_jacobian(lin, std::vector<double>{0.3, -0.2, 7}) == w);

  // relu rows are zeroed where the pre-activation is not positive.
  const DenseLayer relu = dense(w, Vector{0, 0}, Activation::Relu);
  const Matrix jr = layer_jacobian(relu, std::vector<double>{1, 0, 0});
  CHECK(jr(0, 0) == 1.0);
  CHECK(jr(1, 0) == 0.0);
  CHECK(jr(1, 2) == 0.0);

  const LayerStack s = fitted_stack({3, 2}, 2, 2, LeafMode::Linear, rng);
  const Matrix j = layer_jacobian(s.layers[0], std::vector<double>{0.1, 0.2, 0.3});
  CHECK(j.rows() == 2);
  CHECK(j.cols() == 3);
}

TEST_CASE("backward: zero Jacobian blocks everything upstream") {
  Rng rng(8);
  LayerStack s = fitted_stack({2, 2, 1}, 2, 2, LeafMode::Linear, rng);
  s.layers[1] = GbdtLayer{{}, {constant_booster(3, 2)}, 2, 1};
  const Matrix x = random_matrix(20, 2, rng);
  const auto h = forward(s, x);
  const auto g = backward(s, x, h, random_matrix(20, 1, rng));
  for (double v : g[1].data()) CHECK(v == 0.0);
  for (double v : g[0].data()) CHECK(v == 0.0);
}

TEST_CASE("backward: identity dense layer is g times W") {
  const Matrix w = Matrix::from_rows({{1, 2}, {3, -1}, {0.5, 0}});
  LayerStack s;
  s.layers.emplace_back(dense(w, Vector(3, 0.1), Activation::Identity));
  Rng rng(9);
  const Matrix x = random_matrix(5, 2, rng);
  const Matrix g1 = random_matrix(5, 3, rng);
  const auto g = backward(s, x, forward(s, x), g1);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double expected = 0.0;
      for (std::size_t o = 0; o < 3; ++o) expected += g1(r, o) * w(o, c);
      CHECK(g[0](r, c) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("backward: input gradient matches finite differences of the loss") {
  Rng rng(10);
  const LayerStack s = fitted_stack({2, 2, 1}, 1, 2, LeafMode::Linear, rng);
  const Matrix y = random_matrix(1, 1, rng);
  int checked = 0;
  for (int k = 0; k < 500 && checked < 50; ++k) {
    const std::vector<double> x0{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (min_room(s, x0) <= 1e-4) continue;
    auto loss_at = [&](std::span<const double> p) {
      return loss_and_gradient(forward(s, Matrix(1, 2, Vector(p.begin(), p.end()))).back(), y,
                               LossKind::Mse)
          .loss;
    };
    const Matrix x(1, 2, x0);
    const auto h = forward(s, x);
    const auto g = backward(s, x, h, loss_and_gradient(h.back(), y, LossKind::Mse).gradient);
    const Vector numeric = finite_diff_gradient(loss_at, x0, 1e-6);
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(numeric[c] - g[0](0, c)) < 1e-5);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("momentum_update and update_hidden algebra") {
  const Matrix m0(1, 2, 0.0);
  const Matrix g = Matrix::from_rows({{1, -2}});
  CHECK(momentum_update(m0, g, 0.5) == Matrix::from_rows({{0.5, -1}}));
  CHECK(momentum_update(Matrix::from_rows({{3, 4}}), g, 0.0) == g);
  Matrix m = Matrix::from_rows({{8, -4}});
  for (int k = 0; k < 3; ++k) m = momentum_update(m, Matrix(1, 2, 0.0), 0.5);
  CHECK(m == Matrix::from_rows({{1, -0.5}}));

  CHECK(update_hidden(Matrix::from_rows({{1}}), Matrix::from_rows({{0.5}}), 0.5) ==
        Matrix::from_rows({{0.75}}));
  const Matrix h = Matrix::from_rows({{1, 2}});
  CHECK(update_hidden(h, Matrix(1, 2, 0.0), 0.5) == h);
  const Matrix cm = Matrix::from_rows({{0.25, -1}});
  CHECK(update_hidden(update_hidden(h, cm, 0.5), cm, 0.5) == Matrix::from_rows({{0.75, 3}}));
  CHECK_THROWS_AS(update_hidden(h, Matrix(2, 2), 0.5), Error);
  CHECK_THROWS_AS(momentum_update(h, Matrix(1, 3), 0.5), Error);

  Rng rng(2);
  const Matrix hh = random_matrix(6, 3, rng), mm = random_matrix(6, 3, rng),
               gg = random_matrix(6, 3, rng);
  const Matrix combined = update_hidden(hh, momentum_update(mm, gg, 0.3), 0.7);
  for (std::size_t i = 0; i < hh.data().size(); ++i) {
    CHECK(combined.data()[i] ==
          hh.data()[i] - 0.7 * (0.3 * mm.data()[i] + (1.0 - 0.3) * gg.data()[i]));
  }
}

TEST_CASE("refit_layer: enough capacity fits well and refits are reproducible") {
  Rng rng(12);
  const Matrix x = random_matrix(100, 2, rng);
  Matrix target(100, 2);
  for (std::size_t r = 0; r < 100; ++r) {
    target(r, 0) = std::sin(2 * x(r, 0)) + x(r, 1);
    target(r, 1) = x(r, 0) * x(r, 1);
  }
  GbdtLayer layer{gbdt_spec(32, 6).params, {}, 2, 2};
  Layer l = layer;
  refit_layer(l, x, target);
  const Matrix out = apply_layer(l, x);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sd = 0.0, err = 0.0;
    for (std::size_t r = 0; r < 100; ++r) mean += target(r, c) / 100;
    for (std::size_t r = 0; r < 100; ++r) {
      sd += (target(r, c) - mean) * (target(r, c) - mean) / 100;
      err += (out(r, c) - target(r, c)) * (out(r, c) - target(r, c)) / 100;
    }
    CHECK(std::sqrt(err) < 0.05 * std::sqrt(sd));
  }

  // Refitting from scratch to the same targets reproduces the layer.
  Layer again = l;
  refit_layer(again, x, target);
  CHECK(apply_layer(again, x) == out);
}

TEST_CASE("refit_layer: dense SGD steps decrease MSE on a linear target") {
  Rng rng(13);
  const Matrix x = random_matrix(50, 3, rng);
  Matrix target(50, 2);
  for (std::size_t r = 0; r < 50; ++r) {
    target(r, 0) = x(r, 0) - 2 * x(r, 2) + 0.5;
    target(r, 1) = x(r, 1);
  }
  DenseLayer d = dense(Matrix(2, 3, 0.1), Vector(2, 0.0), Activation::Identity);
  d.sgd_lr = 0.05;
  d.sgd_steps = 1;
  Layer l = d;
  double previous = dense_mse(std::get<DenseLayer>(l), x, target);
  for (int step = 0; step < 15; ++step) {
    refit_layer(l, x, target);
    const double now = dense_mse(std::get<DenseLayer>(l), x, target);
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("train: epochs = 0 returns the initialized stack") {
  const Dataset d = gen_circle(200, 1);
  TrainConfig c;
  c.widths = {2, 2, 1};
  c.layers = {gbdt_spec(2, 3), gbdt_spec(2, 3)};
  c.epochs = 0;
  const TrainedModel m = train_model(c, d);
  CHECK(m.result.history.empty());
  for (const Layer& layer : m.stack.layers) {
    CHECK(std::get<GbdtLayer>(layer).boosters.size() == layer_out_dim(layer));
  }
}

namespace {

// Records what each refit saw and what the hidden state was at epoch start.
struct Recorder : TrainObserver {
  std::vector<std::vector<Matrix>> begin;
  std::vector<std::tuple<int, std::size_t, Matrix>> refits;
  std::vector<std::vector<Matrix>> ends;
  void on_epoch_begin(int, const std::vector<Matrix>& h) override { begin.push_back(h); }
  void on_refit(int epoch, std::size_t layer, const Matrix& input, const Matrix&) override {
    refits.emplace_back(epoch, layer, input);
  }
  void on_epoch_end(int, const LayerStack&, const std::vector<Matrix>& h) override {
    ends.push_back(h);
  }
};

}  // namespace

TEST_CASE("train: refits run top-down and read h_{i-1} before its update") {
  const Dataset d = gen_circle(200, 2);
  TrainConfig c;
  c.widths = {2, 3, 2, 1};
  c.layers = {gbdt_spec(2, 3), gbdt_spec(2, 3), gbdt_spec(2, 3)};
  c.epochs = 3;
  Recorder rec;
  train_model(c, d, &rec);
  REQUIRE(rec.begin.size() == 3);
  std::size_t k = 3;  // skip initialization refits
  for (int epoch = 1; epoch <= 3; ++epoch) {
    const auto& start = rec.begin[epoch - 1];
    for (std::size_t layer = 3; layer >= 1; --layer, ++k) {
      const auto& [e, l, input] = rec.refits[k];
      CHECK(e == epoch);
      CHECK(l == layer);
      if (layer >= 2) CHECK(input == start[layer - 2]);
    }
    // Shape discipline: the epoch's hidden list matches the widths.
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(rec.ends[epoch][i].rows() == 200);
      CHECK(rec.ends[epoch][i].cols() == c.widths[i + 1]);
    }
  }
}

TEST_CASE("train: constant-leaf top layer freezes upstream targets") {
  const Dataset d = gen_circle(200, 3);
  TrainConfig c;
  c.widths = {2, 2, 1};
  GbdtLayerSpec top = gbdt_spec(2, 3);
  top.params.tree.leaf_mode = LeafMode::Constant;
  c.layers = {gbdt_spec(2, 3), top};
  c.epochs = 2;
  struct Targets : TrainObserver {
    std::vector<Matrix> start;
    std::vector<Matrix> layer1_targets;
    void on_epoch_begin(int, const std::vector<Matrix>& h) override { start.push_back(h[0]); }
    void on_refit(int epoch, std::size_t layer, const Matrix&, const Matrix& target) override {
      if (epoch > 0 && layer == 1) layer1_targets.push_back(target);
    }
  } obs;
  const TrainedModel m = train_model(c, d, &obs);
  REQUIRE(obs.layer1_targets.size() == 2);
  // Layer 1 is refit to its own hidden state, untouched by the update.
  for (std::size_t e = 0; e < 2; ++e) CHECK(obs.layer1_targets[e] == obs.start[e]);
  for (double v : m.result.momentum[0].data()) CHECK(v == 0.0);
}

TEST_CASE("train: deterministic under a fixed seed") {
  const Dataset d = gen_circle(400, 4);
  TrainConfig c;
  c.widths = {2, 2, 1};
  c.layers = {gbdt_spec(4, 4), gbdt_spec(4, 4)};
  c.epochs = 4;
  c.metric = MetricKind::Accuracy;
  const TrainedModel a = train_model(c, d);
  const TrainedModel b = train_model(c, d);
  REQUIRE(a.result.history.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(a.result.history[e].loss == b.result.history[e].loss);
    CHECK(a.result.history[e].metric == b.result.history[e].metric);
  }
  c.seed = 2;
  const TrainedModel other = train_model(c, d);
  CHECK(other.result.history[0].loss != a.result.history[0].loss);
}

TEST_CASE("train: circle reaches high training accuracy") {
  const Dataset d = gen_circle(2000, 7);
  TrainConfig c;
  c.widths = {2, 2, 1};
  GbdtLayerSpec g = gbdt_spec(8, 6);
  g.params.tree.lambda = 1.0;
  g.params.tree.min_samples_leaf = 32;
  g.params.tree.min_samples_split = 64;
  c.layers = {g, g};
  c.epochs = 30;
  c.init_std = 0.2;
  c.metric = MetricKind::Accuracy;
  const TrainedModel m = train_model(c, d);
  double best = 0.0;
  for (const EpochRecord& r : m.result.history) best = std::max(best, r.metric);
  CHECK(best >= 0.99);
}

TEST_CASE("TrainConfig: validation") {
  TrainConfig c;
  c.widths = {2, 1};
  c.layers = {gbdt_spec(1, 1)};
  CHECK_NOTHROW(c.validate());
  c.mu = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.mu = 0.5;
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.alpha = 0.5;
  c.layers.clear();
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("enum names round-trip") {
  for (LossKind k : {LossKind::Mse, LossKind::SoftmaxCrossEntropy}) CHECK(parse_loss(to_string(k)) == k);
  for (MetricKind k : {MetricKind::Rmse, MetricKind::Accuracy}) CHECK(parse_metric(to_string(k)) == k);
  for (Activation k : {Activation::Relu, Activation::Identity})
    CHECK(parse_activation(to_string(k)) == k);
  for (LeafMode k : {LeafMode::Linear, LeafMode::Constant}) CHECK(parse_leaf_mode(to_string(k)) == k);
  for (GradientScale k : {GradientScale::PerSample, GradientScale::Mean})
    CHECK(parse_gradient_scale(to_string(k)) == k);
  CHECK_THROWS_AS(parse_loss("hinge"), Error);
}
