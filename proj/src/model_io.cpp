#include "gbdtbp/model_io.hpp"

#include <deque>
#include <fstream>
#include <sstream>

#include "gbdtbp/error.hpp"

namespace gbdtbp {

using nlohmann::json;

namespace {

json leaf_to_json(const LeafModel& leaf) {
  if (leaf.mode == LeafMode::Constant) return {{"mode", "constant"}, {"value", leaf.constant_value}};
  return {{"mode", "linear"}, {"features", leaf.selected_features}, {"weights", leaf.weights}};
}

LeafModel leaf_from_json(const json& j) {
  LeafModel leaf;
  leaf.mode = parse_leaf_mode(j.at("mode").get<std::string>());
  if (leaf.mode == LeafMode::Constant) {
    leaf.constant_value = j.at("value").get<double>();
  } else {
    leaf.selected_features = j.at("features").get<std::vector<std::size_t>>();
    leaf.weights = j.at("weights").get<Vector>();
  }
  return leaf;
}

json node_to_json(const DecisionTree& tree, int id) {
  const TreeNode& node = tree.nodes()[id];
  if (node.is_leaf()) return {{"leaf", leaf_to_json(tree.leaves()[node.leaf])}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"left", node_to_json(tree, node.left)},
          {"right", node_to_json(tree, node.right)}};
}

template <class F>
auto wrap_parse(const char* what, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::ParseError, std::string(what) + ": " + e.what());
  }
}

json booster_params_to_json(const BoosterParams& p) {
  return {{"n_boosters", p.n_boosters},
          {"shrinkage", p.shrinkage},
          {"max_depth", p.tree.max_depth},
          {"min_samples_leaf", p.tree.min_samples_leaf},
          {"min_samples_split", p.tree.min_samples_split},
          {"lambda", p.tree.lambda},
          {"leaf_mode", to_string(p.tree.leaf_mode)}};
}

BoosterParams booster_params_from_json(const json& j) {
  BoosterParams p;
  p.n_boosters = j.at("n_boosters").get<int>();
  p.shrinkage = j.at("shrinkage").get<double>();
  p.tree.max_depth = j.at("max_depth").get<int>();
  p.tree.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  p.tree.min_samples_split = j.at("min_samples_split").get<int>();
  p.tree.lambda = j.at("lambda").get<double>();
  p.tree.leaf_mode = parse_leaf_mode(j.at("leaf_mode").get<std::string>());
  return p;
}

}  // namespace

json tree_to_json(const DecisionTree& tree) {
  return {{"input_dim", tree.input_dim()}, {"routing", "le_left"}, {"root", node_to_json(tree, 0)}};
}

DecisionTree tree_from_json(const json& j) {
  return wrap_parse("tree", [&] {
    if (j.at("routing").get<std::string>() != "le_left") {
      fail(ErrorCode::ParseError, "unsupported routing rule");
    }
    const auto input_dim = j.at("input_dim").get<std::size_t>();
    // Rebuild breadth-first so node ids and leaf numbering match fit_tree.
    std::vector<TreeNode> nodes(1);
    std::vector<const json*> pending{&j.at("root")};
    std::vector<int> leaf_nodes;
    std::vector<LeafModel> leaf_models;
    for (std::size_t id = 0; id < pending.size(); ++id) {
      const json& rec = *pending[id];
      if (rec.contains("leaf")) {
        leaf_nodes.push_back(static_cast<int>(id));
        leaf_models.push_back(leaf_from_json(rec.at("leaf")));
        continue;
      }
      TreeNode& node = nodes[id];
      node.feature = rec.at("feature").get<int>();
      node.threshold = rec.at("threshold").get<double>();
      node.left = static_cast<int>(pending.size());
      node.right = node.left + 1;
      pending.push_back(&rec.at("left"));
      pending.push_back(&rec.at("right"));
      nodes.resize(pending.size());
    }
    for (std::size_t i = 0; i < leaf_nodes.size(); ++i) nodes[leaf_nodes[i]].leaf = static_cast<int>(i);
    return DecisionTree(std::move(nodes), std::move(leaf_models), input_dim);
  });
}

json layer_to_json(const Layer& layer) {
  if (const auto* g = std::get_if<GbdtLayer>(&layer)) {
    json boosters = json::array();
    for (const Booster& b : g->boosters) {
      json trees = json::array();
      for (const DecisionTree& t : b.trees()) trees.push_back(tree_to_json(t));
      boosters.push_back(
          {{"shrinkage", b.shrinkage()}, {"input_dim", b.input_dim()}, {"trees", std::move(trees)}});
    }
    return {{"type", "gbdt"},
            {"in_dim", g->in_dim},
            {"out_dim", g->out_dim},
            {"params", booster_params_to_json(g->params)},
            {"boosters", std::move(boosters)}};
  }
  const auto& d = std::get<DenseLayer>(layer);
  return {{"type", "dense"},
          {"in_dim", d.weights.cols()},
          {"out_dim", d.weights.rows()},
          {"weights", d.weights.data()},
          {"bias", d.bias},
          {"activation", to_string(d.activation)},
          {"sgd_lr", d.sgd_lr},
          {"sgd_steps", d.sgd_steps}};
}

Layer layer_from_json(const json& j) {
  return wrap_parse("layer", [&]() -> Layer {
    const std::string type = j.at("type").get<std::string>();
    const auto in = j.at("in_dim").get<std::size_t>();
    const auto out = j.at("out_dim").get<std::size_t>();
    if (type == "gbdt") {
      GbdtLayer g;
      g.in_dim = in;
      g.out_dim = out;
      g.params = booster_params_from_json(j.at("params"));
      for (const json& b : j.at("boosters")) {
        std::vector<DecisionTree> trees;
        for (const json& t : b.at("trees")) trees.push_back(tree_from_json(t));
        g.boosters.emplace_back(std::move(trees), b.at("shrinkage").get<double>(),
                                b.at("input_dim").get<std::size_t>());
      }
      return g;
    }
    if (type == "dense") {
      DenseLayer d;
      d.weights = Matrix(out, in, j.at("weights").get<std::vector<double>>());
      d.bias = j.at("bias").get<Vector>();
      d.activation = parse_activation(j.at("activation").get<std::string>());
      d.sgd_lr = j.at("sgd_lr").get<double>();
      d.sgd_steps = j.at("sgd_steps").get<int>();
      return d;
    }
    fail(ErrorCode::ParseError, "unknown layer type '" + type + "'");
  });
}

json stack_to_json(const LayerStack& stack) {
  json layers = json::array();
  for (const Layer& layer : stack.layers) layers.push_back(layer_to_json(layer));
  return {{"loss", to_string(stack.loss)}, {"layers", std::move(layers)}};
}

LayerStack stack_from_json(const json& j) {
  return wrap_parse("stack", [&] {
    LayerStack stack;
    stack.loss = parse_loss(j.at("loss").get<std::string>());
    for (const json& layer : j.at("layers")) stack.layers.push_back(layer_from_json(layer));
    stack.validate();
    return stack;
  });
}

json encoding_to_json(const DatasetEncoding& enc) {
  json features = json::array();
  for (const ColumnEncoding& c : enc.features) {
    json col = {{"name", c.name}, {"categorical", c.categorical}};
    if (c.categorical) col["categories"] = c.categories;
    features.push_back(std::move(col));
  }
  return {{"features", std::move(features)},
          {"targets", enc.target_columns},
          {"task", to_string(enc.task)},
          {"classes", enc.classes}};
}

DatasetEncoding encoding_from_json(const json& j) {
  return wrap_parse("encoding", [&] {
    DatasetEncoding enc;
    for (const json& c : j.at("features")) {
      ColumnEncoding col;
      col.name = c.at("name").get<std::string>();
      col.categorical = c.at("categorical").get<bool>();
      if (col.categorical) col.categories = c.at("categories").get<std::vector<std::string>>();
      enc.features.push_back(std::move(col));
    }
    enc.target_columns = j.at("targets").get<std::vector<std::string>>();
    enc.task = parse_task(j.at("task").get<std::string>());
    enc.classes = j.at("classes").get<std::vector<std::string>>();
    return enc;
  });
}

json model_to_json(const ModelFile& model) {
  return {{"format", "gbdtbp-model"},
          {"format_version", model.format_version},
          {"config", model.config},
          {"encoding", encoding_to_json(model.encoding)},
          {"stack", stack_to_json(model.stack)}};
}

ModelFile model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "gbdtbp-model") {
    fail(ErrorCode::ParseError, "not a gbdtbp model file");
  }
  const int version = wrap_parse("model", [&] { return j.at("format_version").get<int>(); });
  if (version > kModelFormatVersion || version < 1) {
    fail(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                         " is not supported (this build reads up to " +
                                         std::to_string(kModelFormatVersion) + ")");
  }
  ModelFile model;
  model.format_version = version;
  model.config = j.value("config", json::object());
  model.encoding = encoding_from_json(j.at("encoding"));
  model.stack = stack_from_json(j.at("stack"));
  return model;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << model_to_json(model).dump() << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, "invalid model file '" + path.string() + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace gbdtbp
