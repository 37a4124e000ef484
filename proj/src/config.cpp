#include "gbdtbp/config.hpp"

#include <fstream>
#include <set>

#include "gbdtbp/error.hpp"

namespace gbdtbp {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      fail(ErrorCode::ConfigError, "unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
  }
}

LayerSpec parse_layer(const json& j, const std::string& where) {
  std::string type = "gbdt";
  read(j, "type", type, where);
  if (type == "gbdt") {
    reject_unknown(j,
                   {"type", "n_boosters", "shrinkage", "max_depth", "min_samples_leaf",
                    "min_samples_split", "lambda", "leaf_mode"},
                   where);
    GbdtLayerSpec spec;
    read(j, "n_boosters", spec.params.n_boosters, where);
    read(j, "shrinkage", spec.params.shrinkage, where);
    read(j, "max_depth", spec.params.tree.max_depth, where);
    read(j, "min_samples_leaf", spec.params.tree.min_samples_leaf, where);
    read(j, "min_samples_split", spec.params.tree.min_samples_split, where);
    read(j, "lambda", spec.params.tree.lambda, where);
    std::string mode = to_string(spec.params.tree.leaf_mode);
    read(j, "leaf_mode", mode, where);
    spec.params.tree.leaf_mode = parse_leaf_mode(mode);
    return spec;
  }
  if (type == "dense") {
    reject_unknown(j, {"type", "activation", "sgd_lr", "sgd_steps"}, where);
    DenseLayerSpec spec;
    std::string act = to_string(spec.activation);
    read(j, "activation", act, where);
    spec.activation = parse_activation(act);
    read(j, "sgd_lr", spec.sgd_lr, where);
    read(j, "sgd_steps", spec.sgd_steps, where);
    return spec;
  }
  fail(ErrorCode::ConfigError, where + ": unknown layer type '" + type + "'");
}

json layer_to_json(const LayerSpec& spec) {
  if (const auto* g = std::get_if<GbdtLayerSpec>(&spec)) {
    const BoosterParams& p = g->params;
    return {{"type", "gbdt"},
            {"n_boosters", p.n_boosters},
            {"shrinkage", p.shrinkage},
            {"max_depth", p.tree.max_depth},
            {"min_samples_leaf", p.tree.min_samples_leaf},
            {"min_samples_split", p.tree.min_samples_split},
            {"lambda", p.tree.lambda},
            {"leaf_mode", to_string(p.tree.leaf_mode)}};
  }
  const auto& d = std::get<DenseLayerSpec>(spec);
  return {{"type", "dense"},
          {"activation", to_string(d.activation)},
          {"sgd_lr", d.sgd_lr},
          {"sgd_steps", d.sgd_steps}};
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  reject_unknown(j, {"dataset", "model", "train", "cv", "gradcheck", "output_dir", "dump_hidden"},
                 "config");
  RunConfig config;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"generator", "n", "seed", "csv", "targets", "categorical", "task"},
                   "dataset");
    DatasetSpec& spec = config.dataset;
    read(d, "generator", spec.generator, "dataset");
    read(d, "n", spec.n, "dataset");
    read(d, "seed", spec.seed, "dataset");
    std::string csv;
    read(d, "csv", csv, "dataset");
    spec.csv = csv;
    read(d, "targets", spec.targets, "dataset");
    read(d, "categorical", spec.categorical, "dataset");
    if (!spec.generator.empty() && !csv.empty()) {
      fail(ErrorCode::ConfigError, "dataset: give either generator or csv, not both");
    }
    if (spec.generator == "circle") {
      spec.task = Task::Classification;
    } else if (spec.generator == "curve" || spec.generator == "rand-nn") {
      spec.task = Task::Regression;
    } else if (!spec.generator.empty()) {
      fail(ErrorCode::ConfigError, "dataset: unknown generator '" + spec.generator + "'");
    }
    if (d.contains("task")) {
      std::string task;
      read(d, "task", task, "dataset");
      spec.task = parse_task(task);
    }
  }

  TrainConfig& train = config.train;
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, {"widths", "layers", "layer"}, "model");
    read(m, "widths", train.widths, "model");
    if (m.contains("layers") && m.contains("layer")) {
      fail(ErrorCode::ConfigError, "model: give either layers or layer, not both");
    }
    if (m.contains("layers")) {
      const json& layers = m.at("layers");
      if (!layers.is_array()) fail(ErrorCode::ConfigError, "model.layers must be an array");
      for (std::size_t i = 0; i < layers.size(); ++i) {
        train.layers.push_back(parse_layer(layers[i], "model.layers[" + std::to_string(i) + "]"));
      }
    } else {
      const json shared = m.value("layer", json::object());
      for (std::size_t i = 0; i + 1 < train.widths.size(); ++i) {
        train.layers.push_back(parse_layer(shared, "model.layer"));
      }
    }
  }

  if (!train.widths.empty() && train.layers.size() + 1 != train.widths.size()) {
    fail(ErrorCode::ConfigError, "model: " + std::to_string(train.widths.size()) +
                                     " widths need " + std::to_string(train.widths.size() - 1) +
                                     " layers, got " + std::to_string(train.layers.size()));
  }

  bool loss_given = false;
  bool metric_given = false;
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t,
                   {"alpha", "mu", "epochs", "seed", "loss", "metric", "init_std",
                    "gradient_scale"},
                   "train");
    read(t, "alpha", train.alpha, "train");
    read(t, "mu", train.mu, "train");
    read(t, "epochs", train.epochs, "train");
    read(t, "seed", train.seed, "train");
    read(t, "init_std", train.init_std, "train");
    std::string name;
    if (t.contains("loss")) {
      read(t, "loss", name, "train");
      train.loss = parse_loss(name);
      loss_given = true;
    }
    if (t.contains("metric")) {
      read(t, "metric", name, "train");
      train.metric = parse_metric(name);
      metric_given = true;
    }
    if (t.contains("gradient_scale")) {
      read(t, "gradient_scale", name, "train");
      train.gradient_scale = parse_gradient_scale(name);
    }
  }
  const bool classification = config.dataset.task == Task::Classification;
  if (!loss_given) {
    train.loss = classification && !train.widths.empty() && train.widths.back() > 1
                     ? LossKind::SoftmaxCrossEntropy
                     : LossKind::Mse;
  }
  if (!metric_given) train.metric = classification ? MetricKind::Accuracy : MetricKind::Rmse;

  if (j.contains("cv")) {
    const json& c = j.at("cv");
    reject_unknown(c, {"folds", "seed"}, "cv");
    read(c, "folds", config.cv.folds, "cv");
    read(c, "seed", config.cv.seed, "cv");
  }
  if (j.contains("gradcheck")) {
    const json& g = j.at("gradcheck");
    reject_unknown(g, {"points", "eps", "tolerance"}, "gradcheck");
    read(g, "points", config.gradcheck.points, "gradcheck");
    read(g, "eps", config.gradcheck.eps, "gradcheck");
    read(g, "tolerance", config.gradcheck.tolerance, "gradcheck");
  }
  std::string out_dir = config.output_dir.string();
  read(j, "output_dir", out_dir, "config");
  config.output_dir = out_dir;
  read(j, "dump_hidden", config.dump_hidden, "config");
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, "invalid config '" + path.string() + "': " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& config) {
  json dataset;
  const DatasetSpec& d = config.dataset;
  if (!d.generator.empty()) {
    dataset = {{"generator", d.generator}, {"n", d.n}, {"seed", d.seed}};
  } else {
    dataset = {{"csv", d.csv.string()}, {"targets", d.targets}, {"categorical", d.categorical}};
  }
  dataset["task"] = to_string(d.task);
  json layers = json::array();
  for (const LayerSpec& spec : config.train.layers) layers.push_back(layer_to_json(spec));
  const TrainConfig& t = config.train;
  return {{"dataset", std::move(dataset)},
          {"model", {{"widths", t.widths}, {"layers", std::move(layers)}}},
          {"train",
           {{"alpha", t.alpha},
            {"mu", t.mu},
            {"epochs", t.epochs},
            {"seed", t.seed},
            {"loss", to_string(t.loss)},
            {"metric", to_string(t.metric)},
            {"init_std", t.init_std},
            {"gradient_scale", to_string(t.gradient_scale)}}},
          {"cv", {{"folds", config.cv.folds}, {"seed", config.cv.seed}}},
          {"gradcheck",
           {{"points", config.gradcheck.points},
            {"eps", config.gradcheck.eps},
            {"tolerance", config.gradcheck.tolerance}}},
          {"output_dir", config.output_dir.string()},
          {"dump_hidden", config.dump_hidden}};
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.generator == "circle") return gen_circle(spec.n, spec.seed);
  if (spec.generator == "curve") return gen_curve(spec.n, spec.seed);
  if (spec.generator == "rand-nn") return gen_random_nn(spec.n, spec.seed);
  if (!spec.generator.empty()) {
    fail(ErrorCode::ConfigError, "unknown generator '" + spec.generator + "'");
  }
  if (spec.csv.empty()) fail(ErrorCode::ConfigError, "dataset needs a generator or a csv path");
  return load_csv(spec.csv, spec.targets, spec.categorical, spec.task);
}

}  // namespace gbdtbp
