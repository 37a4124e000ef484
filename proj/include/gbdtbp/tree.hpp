#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gbdtbp/numeric.hpp"

namespace gbdtbp {

enum class LeafMode { Constant, Linear };

struct TreeParams {
  int max_depth = 6;
  int min_samples_leaf = 8;
  int min_samples_split = 16;
  double lambda = 0.1;  // ridge strength for linear leaves
  LeafMode leaf_mode = LeafMode::Linear;

  // Throws InvalidArgument unless max_depth >= 1, min_samples_leaf >= 1,
  // min_samples_split >= 2 * min_samples_leaf and lambda >= 0.
  void validate() const;
};

// A leaf either holds a constant (mean of its targets) or a ridge-fitted
// model phi(x_S)^T w where S = selected_features and phi(z) = [1, z, z^2].
struct LeafModel {
  LeafMode mode = LeafMode::Constant;
  double constant_value = 0.0;
  std::vector<std::size_t> selected_features;
  Vector weights;  // empty in constant mode, 2|S| + 1 entries otherwise

  double predict(std::span<const double> x) const;
  // grad += scale * d(predict)/dx, touching only the selected features.
  void accumulate_gradient(std::span<const double> x, double scale, std::span<double> grad) const;

  friend bool operator==(const LeafModel&, const LeafModel&) = default;
};

// Routing: x[feature] <= threshold goes left, otherwise right.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf = -1;  // index into DecisionTree::leaves() when this is a leaf

  bool is_leaf() const noexcept { return leaf >= 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  // Validates the topology: node 0 is the root, every node is reachable
  // exactly once, split features are < input_dim and leaf indices are a
  // permutation of the leaf list.
  DecisionTree(std::vector<TreeNode> nodes, std::vector<LeafModel> leaves, std::size_t input_dim);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t depth() const noexcept { return depth_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<LeafModel>& leaves() const noexcept { return leaves_; }

  std::size_t leaf_index(std::span<const double> x) const;
  double predict(std::span<const double> x) const;
  void accumulate_gradient(std::span<const double> x, double scale, std::span<double> grad) const;

  // Deduplicated split features from the root down to `leaf`, in order of
  // first occurrence.
  std::vector<std::size_t> path_features(std::size_t leaf) const;

  // Smallest |x[f] - t| over all split nodes (f, t); +inf for a stump.
  double min_threshold_distance(std::span<const double> x) const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  void check_dim(std::span<const double> x) const;

  std::vector<TreeNode> nodes_;
  std::vector<LeafModel> leaves_;
  std::vector<int> leaf_node_;  // leaf index -> node id
  std::vector<int> parent_;
  std::size_t input_dim_ = 0;
  std::size_t depth_ = 0;
};

// Per-feature row orderings of a design matrix, computed once and shared by
// every tree fitted on the same inputs.
class SortedColumns {
 public:
  explicit SortedColumns(const Matrix& x);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return order_.size(); }
  std::span<const std::uint32_t> order(std::size_t feature) const { return order_[feature]; }
  // Column values in sorted order, aligned with order(feature).
  std::span<const double> values(std::size_t feature) const { return values_[feature]; }

 private:
  std::size_t rows_ = 0;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::vector<double>> values_;
};

// Friedman improvement n_l n_r / (n_l + n_r) * (mean_l - mean_r)^2.
double friedman_improvement(double count_left, double sum_left, double count_right,
                            double sum_right);

DecisionTree fit_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params);
DecisionTree fit_tree(const Matrix& x, const SortedColumns& sorted, std::span<const double> targets,
                      const TreeParams& params);

LeafModel fit_leaf(const Matrix& x_leaf, std::span<const double> targets,
                   std::span<const std::size_t> selected_features, double lambda);

// [1, x_1..x_k, x_1^2..x_k^2]
Vector extend_features(std::span<const double> x);
// (2k + 1) x k Jacobian of extend_features.
Matrix extend_features_jacobian(std::span<const double> x);

double predict_tree(const DecisionTree& tree, std::span<const double> x);
Vector tree_gradient(const DecisionTree& tree, std::span<const double> x);
std::vector<std::size_t> path_features(const DecisionTree& tree, std::size_t leaf);

}  // namespace gbdtbp
