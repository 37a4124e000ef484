#include "gbdtbp/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gbdtbp/error.hpp"

namespace gbdtbp {

void TreeParams::validate() const {
  if (max_depth < 1) fail(ErrorCode::InvalidArgument, "max_depth must be >= 1");
  if (min_samples_leaf < 1) fail(ErrorCode::InvalidArgument, "min_samples_leaf must be >= 1");
  if (min_samples_split < 2 * min_samples_leaf) {
    fail(ErrorCode::InvalidArgument, "min_samples_split must be >= 2 * min_samples_leaf");
  }
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be >= 0");
}

double LeafModel::predict(std::span<const double> x) const {
  if (mode == LeafMode::Constant) return constant_value;
  const std::size_t k = selected_features.size();
  double out = weights[0];
  for (std::size_t j = 0; j < k; ++j) {
    const double v = x[selected_features[j]];
    out += weights[1 + j] * v + weights[1 + k + j] * v * v;
  }
  return out;
}

void LeafModel::accumulate_gradient(std::span<const double> x, double scale,
                                    std::span<double> grad) const {
  if (mode == LeafMode::Constant) return;
  const std::size_t k = selected_features.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t f = selected_features[j];
    grad[f] += scale * (weights[1 + j] + 2.0 * x[f] * weights[1 + k + j]);
  }
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::vector<LeafModel> leaves,
                           std::size_t input_dim)
    : nodes_(std::move(nodes)), leaves_(std::move(leaves)), input_dim_(input_dim) {
  if (nodes_.empty()) fail(ErrorCode::InvalidArgument, "tree has no nodes");
  parent_.assign(nodes_.size(), -1);
  leaf_node_.assign(leaves_.size(), -1);
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  seen[0] = 1;
  while (!stack.empty()) {
    auto [id, level] = stack.back();
    stack.pop_back();
    depth_ = std::max(depth_, level);
    const TreeNode& node = nodes_[id];
    if (node.is_leaf()) {
      if (static_cast<std::size_t>(node.leaf) >= leaves_.size() || leaf_node_[node.leaf] != -1) {
        fail(ErrorCode::InvalidArgument, "invalid leaf reference in tree");
      }
      leaf_node_[node.leaf] = id;
      continue;
    }
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= input_dim_) {
      fail(ErrorCode::InvalidArgument, "split feature out of range");
    }
    if (!std::isfinite(node.threshold)) {
      fail(ErrorCode::InvalidArgument, "non-finite split threshold");
    }
    for (int child : {node.left, node.right}) {
      if (child <= 0 || static_cast<std::size_t>(child) >= nodes_.size() || seen[child]) {
        fail(ErrorCode::InvalidArgument, "invalid child reference in tree");
      }
      seen[child] = 1;
      parent_[child] = id;
      stack.emplace_back(child, level + 1);
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end() ||
      std::find(leaf_node_.begin(), leaf_node_.end(), -1) != leaf_node_.end()) {
    fail(ErrorCode::InvalidArgument, "tree has unreachable nodes or leaves");
  }
  for (const LeafModel& leaf : leaves_) {
    if (leaf.mode == LeafMode::Constant) {
      if (!leaf.weights.empty()) fail(ErrorCode::InvalidArgument, "constant leaf with weights");
      continue;
    }
    if (leaf.weights.size() != 2 * leaf.selected_features.size() + 1) {
      fail(ErrorCode::InvalidArgument, "linear leaf weight count mismatch");
    }
    for (std::size_t f : leaf.selected_features) {
      if (f >= input_dim_) fail(ErrorCode::InvalidArgument, "leaf feature out of range");
    }
  }
}

void DecisionTree::check_dim(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    fail(ErrorCode::DimensionMismatch, "tree expects " + std::to_string(input_dim_) +
                                           " inputs, got " + std::to_string(x.size()));
  }
}

std::size_t DecisionTree::leaf_index(std::span<const double> x) const {
  check_dim(x);
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    const TreeNode& node = nodes_[id];
    id = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return static_cast<std::size_t>(nodes_[id].leaf);
}

double DecisionTree::predict(std::span<const double> x) const {
  return leaves_[leaf_index(x)].predict(x);
}

void DecisionTree::accumulate_gradient(std::span<const double> x, double scale,
                                       std::span<double> grad) const {
  if (grad.size() != input_dim_) fail(ErrorCode::DimensionMismatch, "gradient buffer size");
  leaves_[leaf_index(x)].accumulate_gradient(x, scale, grad);
}

std::vector<std::size_t> DecisionTree::path_features(std::size_t leaf) const {
  if (leaf >= leaves_.size()) fail(ErrorCode::InvalidArgument, "leaf index out of range");
  std::vector<int> chain;
  for (int id = parent_[leaf_node_[leaf]]; id >= 0; id = parent_[id]) chain.push_back(id);
  std::vector<std::size_t> features;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const auto f = static_cast<std::size_t>(nodes_[*it].feature);
    if (std::find(features.begin(), features.end(), f) == features.end()) features.push_back(f);
  }
  return features;
}

double DecisionTree::min_threshold_distance(std::span<const double> x) const {
  check_dim(x);
  double best = std::numeric_limits<double>::infinity();
  for (const TreeNode& node : nodes_) {
    if (!node.is_leaf()) best = std::min(best, std::abs(x[node.feature] - node.threshold));
  }
  return best;
}

SortedColumns::SortedColumns(const Matrix& x)
    : rows_(x.rows()), order_(x.cols()), values_(x.cols()) {
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& order = order_[f];
    order.resize(rows_);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    values_[f].resize(rows_);
    for (std::size_t k = 0; k < rows_; ++k) values_[f][k] = x(order[k], f);
  }
}

double friedman_improvement(double count_left, double sum_left, double count_right,
                            double sum_right) {
  const double gap = sum_left / count_left - sum_right / count_right;
  return count_left * count_right / (count_left + count_right) * gap * gap;
}

namespace {

struct Candidate {
  double improvement = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct FrontierNode {
  int node = 0;
  std::size_t depth = 0;
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  bool splittable = false;
  Candidate best;
};

double midpoint(double lo, double hi) {
  const double mid = lo + 0.5 * (hi - lo);
  // Keeps `hi` strictly on the right under the <= rule when lo, hi are adjacent.
  return mid < hi ? mid : lo;
}

}  // namespace

DecisionTree fit_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params) {
  if (x.rows() == 0) fail(ErrorCode::EmptyInput, "fit_tree on zero samples");
  return fit_tree(x, SortedColumns(x), targets, params);
}

DecisionTree fit_tree(const Matrix& x, const SortedColumns& sorted, std::span<const double> targets,
                      const TreeParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0) fail(ErrorCode::EmptyInput, "fit_tree on zero samples");
  if (targets.size() != n) {
    fail(ErrorCode::DimensionMismatch, "fit_tree: targets length " +
                                           std::to_string(targets.size()) + " != " +
                                           std::to_string(n));
  }
  if (sorted.rows() != n || sorted.cols() != d) {
    fail(ErrorCode::DimensionMismatch, "fit_tree: sorted index does not match inputs");
  }
  if (!x.all_finite() ||
      !std::all_of(targets.begin(), targets.end(), [](double v) { return std::isfinite(v); })) {
    fail(ErrorCode::NonFiniteInput, "fit_tree: non-finite input");
  }

  const auto min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
  const auto min_split = static_cast<std::size_t>(params.min_samples_split);
  const auto max_depth = static_cast<std::size_t>(params.max_depth);

  std::vector<TreeNode> nodes(1);
  std::vector<int> node_of(n, 0);   // final node id per sample
  std::vector<int> slot_of(n, 0);   // frontier slot per sample, -1 once settled

  std::vector<FrontierNode> frontier(1);
  for (std::size_t i = 0; i < n; ++i) {
    frontier[0].sum += targets[i];
    frontier[0].sum_sq += targets[i] * targets[i];
  }
  frontier[0].count = n;

  std::vector<std::size_t> left_count;
  std::vector<double> left_sum;
  std::vector<double> last_value;
  std::vector<int> active(n, -1);

  while (!frontier.empty()) {
    bool any_splittable = false;
    for (FrontierNode& fn : frontier) {
      fn.splittable = fn.depth < max_depth && fn.count >= min_split && fn.count >= 2 * min_leaf;
      // Rounding noise on (near) constant targets must not produce a split.
      fn.best.improvement = 1e-12 * fn.sum_sq;
      any_splittable = any_splittable || fn.splittable;
    }

    if (any_splittable) {
      for (std::size_t i = 0; i < n; ++i) {
        active[i] = slot_of[i] >= 0 && frontier[slot_of[i]].splittable ? slot_of[i] : -1;
      }
      left_count.assign(frontier.size(), 0);
      left_sum.assign(frontier.size(), 0.0);
      last_value.assign(frontier.size(), 0.0);
      for (std::size_t f = 0; f < d; ++f) {
        std::fill(left_count.begin(), left_count.end(), 0);
        std::fill(left_sum.begin(), left_sum.end(), 0.0);
        const auto order = sorted.order(f);
        const auto values = sorted.values(f);
        for (std::size_t k = 0; k < n; ++k) {
          const std::uint32_t idx = order[k];
          const int s = active[idx];
          if (s < 0) continue;
          FrontierNode& fn = frontier[s];
          const double v = values[k];
          const std::size_t nl = left_count[s];
          if (nl > 0 && v > last_value[s]) {
            const std::size_t nr = fn.count - nl;
            if (nl >= min_leaf && nr >= min_leaf) {
              // Division-free screen; the exact score decides.
              const double dl = static_cast<double>(nl);
              const double dr = static_cast<double>(nr);
              const double sl = left_sum[s];
              const double sr = fn.sum - sl;
              const double num = sl * dr - sr * dl;
              if (num * num >= 0.999999 * fn.best.improvement * dl * dr * (dl + dr)) {
                const double imp = friedman_improvement(dl, sl, dr, sr);
                if (imp > fn.best.improvement) {
                  fn.best = {imp, static_cast<int>(f), midpoint(last_value[s], v)};
                }
              }
            }
          }
          left_count[s] = nl + 1;
          left_sum[s] += targets[idx];
          last_value[s] = v;
        }
      }
    }

    std::vector<FrontierNode> next;
    std::vector<int> remap(frontier.size() * 2, -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      FrontierNode& fn = frontier[s];
      if (!fn.splittable || fn.best.feature < 0) continue;
      const int left = static_cast<int>(nodes.size());
      nodes.push_back({});
      nodes.push_back({});
      TreeNode& parent = nodes[fn.node];
      parent.feature = fn.best.feature;
      parent.threshold = fn.best.threshold;
      parent.left = left;
      parent.right = left + 1;
      for (int side = 0; side < 2; ++side) {
        remap[2 * s + side] = static_cast<int>(next.size());
        FrontierNode& child = next.emplace_back();
        child.node = left + side;
        child.depth = fn.depth + 1;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int s = slot_of[i];
      if (s < 0) continue;
      const FrontierNode& fn = frontier[s];
      if (remap[2 * s] < 0) {
        slot_of[i] = -1;
        continue;
      }
      const bool go_left = x(i, fn.best.feature) <= fn.best.threshold;
      const int child_slot = remap[2 * s + (go_left ? 0 : 1)];
      FrontierNode& child = next[child_slot];
      child.count += 1;
      child.sum += targets[i];
      child.sum_sq += targets[i] * targets[i];
      slot_of[i] = child_slot;
      node_of[i] = child.node;
    }
    frontier = std::move(next);
  }

  // Leaves are numbered in node-id order; collect members per leaf.
  std::vector<int> leaf_of_node(nodes.size(), -1);
  std::size_t leaf_count = 0;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    if (nodes[id].feature < 0) {
      leaf_of_node[id] = static_cast<int>(leaf_count);
      nodes[id].leaf = static_cast<int>(leaf_count++);
    }
  }
  std::vector<std::vector<std::size_t>> members(leaf_count);
  for (std::size_t i = 0; i < n; ++i) members[leaf_of_node[node_of[i]]].push_back(i);

  // Structure is frozen; a placeholder tree provides the decision paths.
  std::vector<LeafModel> leaves(leaf_count);
  DecisionTree shape(nodes, leaves, d);
  for (std::size_t leaf = 0; leaf < leaf_count; ++leaf) {
    const auto& rows = members[leaf];
    if (params.leaf_mode == LeafMode::Constant) {
      double sum = 0.0;
      for (std::size_t i : rows) sum += targets[i];
      leaves[leaf].constant_value = sum / static_cast<double>(rows.size());
      continue;
    }
    Vector leaf_targets(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) leaf_targets[r] = targets[rows[r]];
    const auto selected = shape.path_features(leaf);
    leaves[leaf] = fit_leaf(select_rows(x, rows), leaf_targets, selected, params.lambda);
  }
  return DecisionTree(std::move(nodes), std::move(leaves), d);
}

LeafModel fit_leaf(const Matrix& x_leaf, std::span<const double> targets,
                   std::span<const std::size_t> selected_features, double lambda) {
  const std::size_t m = x_leaf.rows();
  if (m == 0) fail(ErrorCode::EmptyInput, "fit_leaf on an empty leaf");
  if (targets.size() != m) fail(ErrorCode::DimensionMismatch, "fit_leaf: targets length");
  const std::size_t k = selected_features.size();
  Matrix basis(m, 2 * k + 1);
  Vector picked(k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      if (selected_features[j] >= x_leaf.cols()) {
        fail(ErrorCode::DimensionMismatch, "fit_leaf: selected feature out of range");
      }
      picked[j] = x_leaf(r, selected_features[j]);
    }
    const Vector phi = extend_features(picked);
    std::copy(phi.begin(), phi.end(), basis.row(r).begin());
  }
  LeafModel leaf;
  leaf.mode = LeafMode::Linear;
  leaf.selected_features.assign(selected_features.begin(), selected_features.end());
  leaf.weights = ridge_solve(basis, targets, lambda);
  return leaf;
}

Vector extend_features(std::span<const double> x) {
  const std::size_t k = x.size();
  Vector phi(2 * k + 1);
  phi[0] = 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    phi[1 + j] = x[j];
    phi[1 + k + j] = x[j] * x[j];
  }
  return phi;
}

Matrix extend_features_jacobian(std::span<const double> x) {
  const std::size_t k = x.size();
  Matrix jac(2 * k + 1, k);
  for (std::size_t j = 0; j < k; ++j) {
    jac(1 + j, j) = 1.0;
    jac(1 + k + j, j) = 2.0 * x[j];
  }
  return jac;
}

double predict_tree(const DecisionTree& tree, std::span<const double> x) { return tree.predict(x); }

Vector tree_gradient(const DecisionTree& tree, std::span<const double> x) {
  Vector grad(tree.input_dim(), 0.0);
  tree.accumulate_gradient(x, 1.0, grad);
  return grad;
}

std::vector<std::size_t> path_features(const DecisionTree& tree, std::size_t leaf) {
  return tree.path_features(leaf);
}

}  // namespace gbdtbp
