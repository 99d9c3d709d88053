#include "powmon/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "powmon/util.hpp"

namespace powmon {

namespace {

struct FitContext {
  const std::vector<Sample>* rows;
  Hyperparameters hp;
  std::size_t n_features;
  double impure_band;  // 1% of the training power range
  std::vector<TreeNode>* nodes;
  std::uint32_t max_reached_depth = 0;
};

std::uint32_t leaf_value(const std::vector<Sample>& rows,
                         const std::vector<std::size_t>& idx) {
  std::uint64_t sum = 0;
  for (std::size_t i : idx) sum += rows[i].power_uW;
  return static_cast<std::uint32_t>(round_div(sum, idx.size()));
}

bool should_stop(const FitContext& ctx, const std::vector<std::size_t>& idx,
                 std::uint32_t depth) {
  if (depth >= ctx.hp.max_depth) return true;
  if (idx.size() < ctx.hp.min_split_sample) return true;

  // Pure node / impure-fraction stop: count samples off the node mean by
  // more than the 1%-of-range band.
  std::uint64_t sum = 0;
  for (std::size_t i : idx) sum += (*ctx.rows)[i].power_uW;
  const double mean =
      static_cast<double>(sum) / static_cast<double>(idx.size());
  std::size_t impure = 0;
  for (std::size_t i : idx) {
    if (std::abs(static_cast<double>((*ctx.rows)[i].power_uW) - mean) >
        ctx.impure_band)
      ++impure;
  }
  if (impure == 0) return true;  // zero impurity within the band
  const double impure_fraction =
      static_cast<double>(impure) / static_cast<double>(idx.size());
  return impure_fraction <= ctx.hp.min_leaf_impurity;
}

struct BestSplit {
  bool found = false;
  std::uint32_t feature = 0;
  std::uint32_t threshold = 0;
  double child_sse = std::numeric_limits<double>::infinity();
};

BestSplit find_best_split(const FitContext& ctx,
                          const std::vector<std::size_t>& idx) {
  const auto& rows = *ctx.rows;
  BestSplit best;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> col(idx.size());
  for (std::size_t f = 0; f < ctx.n_features; ++f) {
    for (std::size_t k = 0; k < idx.size(); ++k)
      col[k] = {rows[idx[k]].features[f], rows[idx[k]].power_uW};
    std::sort(col.begin(), col.end());

    // prefix sums over the sorted column
    double sum_l = 0.0, sq_l = 0.0;
    double sum_t = 0.0, sq_t = 0.0;
    for (const auto& [v, y] : col) {
      sum_t += y;
      sq_t += static_cast<double>(y) * y;
    }
    const std::size_t n = col.size();
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double y = col[k].second;
      sum_l += y;
      sq_l += y * y;
      if (col[k].first == col[k + 1].first) continue;  // not a boundary
      const std::size_t n_l = k + 1;
      const std::size_t n_r = n - n_l;
      if (n_l < ctx.hp.min_leaf_sample || n_r < ctx.hp.min_leaf_sample)
        continue;
      const std::uint32_t thr =
          static_cast<std::uint32_t>((static_cast<std::uint64_t>(col[k].first) +
                                      col[k + 1].first) /
                                     2);
      const double sse_l = sq_l - sum_l * sum_l / static_cast<double>(n_l);
      const double sum_r = sum_t - sum_l;
      const double sse_r =
          (sq_t - sq_l) - sum_r * sum_r / static_cast<double>(n_r);
      const double child = sse_l + sse_r;
      // strict improvement keeps the lowest-feature / lowest-threshold winner
      if (child < best.child_sse) {
        best.found = true;
        best.feature = static_cast<std::uint32_t>(f);
        best.threshold = thr;
        best.child_sse = child;
      }
    }
  }
  return best;
}

std::int32_t build_node(FitContext& ctx, std::vector<std::size_t>& idx,
                        std::uint32_t depth) {
  ctx.max_reached_depth = std::max(ctx.max_reached_depth, depth);
  const auto node_id = static_cast<std::int32_t>(ctx.nodes->size());
  ctx.nodes->emplace_back();

  BestSplit split;
  if (!should_stop(ctx, idx, depth)) split = find_best_split(ctx, idx);

  if (!split.found) {
    TreeNode& node = (*ctx.nodes)[static_cast<std::size_t>(node_id)];
    node.is_leaf = true;
    node.value_uW = leaf_value(*ctx.rows, idx);
    node.n_samples = static_cast<std::uint32_t>(idx.size());
    return node_id;
  }

  std::vector<std::size_t> left_idx, right_idx;
  left_idx.reserve(idx.size());
  right_idx.reserve(idx.size());
  for (std::size_t i : idx) {
    if ((*ctx.rows)[i].features[split.feature] <= split.threshold)
      left_idx.push_back(i);
    else
      right_idx.push_back(i);
  }
  const auto n_node = static_cast<std::uint32_t>(idx.size());
  idx.clear();
  idx.shrink_to_fit();

  const std::int32_t left = build_node(ctx, left_idx, depth + 1);
  const std::int32_t right = build_node(ctx, right_idx, depth + 1);

  TreeNode& node = (*ctx.nodes)[static_cast<std::size_t>(node_id)];
  node.is_leaf = false;
  node.feature_index = split.feature;
  node.threshold = split.threshold;
  node.left = left;
  node.right = right;
  node.n_samples = n_node;
  return node_id;
}

}  // namespace

TreeModel fit_tree(const std::vector<Sample>& rows,
                   const std::vector<std::size_t>& indices,
                   const Hyperparameters& hp) {
  if (indices.empty())
    throw std::invalid_argument("fit_tree: empty training set");
  if (hp.max_depth < 1 || hp.min_split_sample < 1 || hp.min_leaf_sample < 1 ||
      hp.min_leaf_impurity < 0.0 || hp.min_leaf_impurity > 1.0)
    throw std::invalid_argument("fit_tree: invalid hyperparameters");

  const std::size_t n_features = rows[indices.front()].features.size();
  std::uint32_t lo = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t hi = 0;
  for (std::size_t i : indices) {
    if (rows[i].features.size() != n_features)
      throw std::invalid_argument("fit_tree: feature length mismatch");
    lo = std::min(lo, rows[i].power_uW);
    hi = std::max(hi, rows[i].power_uW);
  }

  TreeModel model;
  model.hyperparameters = hp;
  model.feature_count = static_cast<std::uint32_t>(n_features);

  FitContext ctx;
  ctx.rows = &rows;
  ctx.hp = hp;
  ctx.n_features = n_features;
  ctx.impure_band = 0.01 * static_cast<double>(hi - lo);
  ctx.nodes = &model.nodes;

  std::vector<std::size_t> idx = indices;
  build_node(ctx, idx, 0);
  model.depth = ctx.max_reached_depth;
  return model;
}

TreeModel fit_tree(const std::vector<Sample>& rows, const Hyperparameters& hp) {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  return fit_tree(rows, idx, hp);
}

std::uint32_t predict(const TreeModel& m, const FeatureVector& x) {
  if (x.size() != m.feature_count)
    throw std::invalid_argument("predict: feature length mismatch");
  const TreeNode* node = &m.nodes.front();
  while (!node->is_leaf) {
    const std::int32_t next =
        x[node->feature_index] <= node->threshold ? node->left : node->right;
    node = &m.nodes[static_cast<std::size_t>(next)];
  }
  return node->value_uW;
}

std::vector<double> feature_importance(const TreeModel& m,
                                       const std::vector<Sample>& rows) {
  struct NodeStat {
    std::uint64_t n = 0;
    double sum = 0.0;
    double sq = 0.0;
  };
  std::vector<NodeStat> stats(m.nodes.size());
  for (const Sample& s : rows) {
    if (s.features.size() != m.feature_count)
      throw std::invalid_argument("feature_importance: feature length mismatch");
    std::size_t id = 0;
    for (;;) {
      NodeStat& st = stats[id];
      st.n += 1;
      st.sum += s.power_uW;
      st.sq += static_cast<double>(s.power_uW) * s.power_uW;
      const TreeNode& node = m.nodes[id];
      if (node.is_leaf) break;
      id = static_cast<std::size_t>(
          s.features[node.feature_index] <= node.threshold ? node.left
                                                           : node.right);
    }
  }

  auto sse = [&](std::size_t id) {
    const NodeStat& st = stats[id];
    if (st.n == 0) return 0.0;
    return st.sq - st.sum * st.sum / static_cast<double>(st.n);
  };

  std::vector<double> importance(m.feature_count, 0.0);
  const double n_total = static_cast<double>(rows.size());
  for (std::size_t id = 0; id < m.nodes.size(); ++id) {
    const TreeNode& node = m.nodes[id];
    if (node.is_leaf) continue;
    const double decrease = sse(id) - sse(static_cast<std::size_t>(node.left)) -
                            sse(static_cast<std::size_t>(node.right));
    importance[node.feature_index] += decrease / n_total;
  }
  double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  if (total > 0.0) {
    for (double& v : importance) v = std::max(v, 0.0) / total;
  } else {
    std::fill(importance.begin(), importance.end(), 0.0);
  }
  return importance;
}

std::string tree_to_json(const TreeModel& m) {
  nlohmann::json j;
  j["depth"] = m.depth;
  j["feature_count"] = m.feature_count;
  j["hyperparameters"] = {{"max_depth", m.hyperparameters.max_depth},
                          {"min_split_sample", m.hyperparameters.min_split_sample},
                          {"min_leaf_sample", m.hyperparameters.min_leaf_sample},
                          {"min_leaf_impurity", m.hyperparameters.min_leaf_impurity}};
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : m.nodes) {
    nlohmann::json e;
    if (n.is_leaf) {
      e["leaf"] = true;
      e["value_uW"] = n.value_uW;
      e["n_samples"] = n.n_samples;
    } else {
      e["leaf"] = false;
      e["feature_index"] = n.feature_index;
      e["threshold"] = n.threshold;
      e["left"] = n.left;
      e["right"] = n.right;
      e["n_samples"] = n.n_samples;
    }
    nodes.push_back(std::move(e));
  }
  j["nodes"] = std::move(nodes);
  return j.dump();
}

TreeModel tree_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TreeModel m;
  m.depth = j.at("depth").get<std::uint32_t>();
  m.feature_count = j.at("feature_count").get<std::uint32_t>();
  const auto& hp = j.at("hyperparameters");
  m.hyperparameters.max_depth = hp.at("max_depth").get<std::uint32_t>();
  m.hyperparameters.min_split_sample = hp.at("min_split_sample").get<std::uint32_t>();
  m.hyperparameters.min_leaf_sample = hp.at("min_leaf_sample").get<std::uint32_t>();
  m.hyperparameters.min_leaf_impurity = hp.at("min_leaf_impurity").get<double>();
  for (const auto& e : j.at("nodes")) {
    TreeNode n;
    n.is_leaf = e.at("leaf").get<bool>();
    n.n_samples = e.at("n_samples").get<std::uint32_t>();
    if (n.is_leaf) {
      n.value_uW = e.at("value_uW").get<std::uint32_t>();
    } else {
      n.feature_index = e.at("feature_index").get<std::uint32_t>();
      n.threshold = e.at("threshold").get<std::uint32_t>();
      n.left = e.at("left").get<std::int32_t>();
      n.right = e.at("right").get<std::int32_t>();
    }
    m.nodes.push_back(n);
  }
  if (m.nodes.empty()) throw std::runtime_error("tree json: no nodes");
  return m;
}

}  // namespace powmon
