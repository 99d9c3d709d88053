#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "powmon/core.hpp"

namespace powmon {

/// The four tunable knobs of a regression tree.
struct Hyperparameters {
  std::uint32_t max_depth = 8;
  std::uint32_t min_split_sample = 2;
  std::uint32_t min_leaf_sample = 1;
  double min_leaf_impurity = 0.0;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

/// Flat tree node. Decision nodes route with "feature <= threshold -> left";
/// leaves carry the rounded mean power of their training samples.
struct TreeNode {
  bool is_leaf = true;
  std::uint32_t feature_index = 0;
  std::uint32_t threshold = 0;
  std::int32_t left = -1;   // index into TreeModel::nodes
  std::int32_t right = -1;
  std::uint32_t value_uW = 0;
  std::uint32_t n_samples = 0;
};

/// Trained CART regression tree. Nodes are stored in preorder; nodes[0] is
/// the root. Thresholds and leaf values are integers throughout.
struct TreeModel {
  std::vector<TreeNode> nodes;
  std::uint32_t depth = 0;
  std::uint32_t feature_count = 0;
  Hyperparameters hyperparameters;

  const TreeNode& root() const { return nodes.front(); }
};

/// Greedy variance-reduction CART fit. A node becomes a leaf when its depth
/// hits max_depth, it is smaller than min_split_sample, no split leaves both
/// children with >= min_leaf_sample samples, the fraction of samples whose
/// target deviates from the node mean by more than 1% of the training power
/// range is <= min_leaf_impurity, or the node is pure. Equal-gain splits
/// resolve to the lowest feature index, then the lowest threshold.
TreeModel fit_tree(const std::vector<Sample>& rows, const Hyperparameters& hp);

/// Same, restricted to rows[indices].
TreeModel fit_tree(const std::vector<Sample>& rows,
                   const std::vector<std::size_t>& indices,
                   const Hyperparameters& hp);

std::uint32_t predict(const TreeModel& m, const FeatureVector& x);

/// Mean-decrease-in-impurity importance, normalized to sum to 1 (all zeros
/// when the tree has no decision node). `rows` must be the training set the
/// model was fit on.
std::vector<double> feature_importance(const TreeModel& m,
                                       const std::vector<Sample>& rows);

/// JSON (preorder node array) round-trip for single trees.
std::string tree_to_json(const TreeModel& m);
TreeModel tree_from_json(const std::string& text);

}  // namespace powmon
