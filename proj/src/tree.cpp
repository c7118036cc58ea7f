#include "metiskit/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace metiskit {

void WeightedDataset::validate() const {
  if (samples.empty()) throw ValidationError("dataset: empty");
  const std::size_t dim = samples.front().state.size();
  for (const Sample& s : samples) {
    if (s.state.size() != dim) {
      throw ValidationError("dataset: inconsistent feature dimension");
    }
    for (double v : s.state) {
      if (!std::isfinite(v)) throw ValidationError("dataset: non-finite feature");
    }
    if (!std::isfinite(s.weight) || s.weight < 0) {
      throw ValidationError("dataset: weights must be finite and non-negative");
    }
    if (mode == TreeMode::kClassify && (s.action < 0 || s.action >= n_actions)) {
      throw ValidationError("dataset: action label out of range");
    }
    if (mode == TreeMode::kRegress && !std::isfinite(s.target)) {
      throw ValidationError("dataset: non-finite regression target");
    }
  }
}

double WeightedDataset::total_weight() const {
  double w = 0.0;
  for (const Sample& s : samples) w += s.weight;
  return w;
}

std::vector<double> WeightedDataset::action_frequencies() const {
  std::vector<double> freq(static_cast<std::size_t>(n_actions), 0.0);
  if (samples.empty()) return freq;
  for (const Sample& s : samples) {
    if (s.action >= 0 && s.action < n_actions) {
      freq[static_cast<std::size_t>(s.action)] += 1.0;
    }
  }
  for (double& f : freq) f /= static_cast<double>(samples.size());
  return freq;
}

std::string WeightedDataset::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    out << feature_names[i] << ',';
  }
  out << (mode == TreeMode::kClassify ? "action" : "target") << ",weight,iteration\n";
  for (const Sample& s : samples) {
    for (double v : s.state) out << v << ',';
    if (mode == TreeMode::kClassify) {
      out << s.action;
    } else {
      out << s.target;
    }
    out << ',' << s.weight << ',' << s.iteration << '\n';
  }
  return out.str();
}

std::string tree_mode_name(TreeMode mode) {
  return mode == TreeMode::kClassify ? "classify" : "regress";
}

TreeMode tree_mode_from_name(const std::string& name) {
  if (name == "classify") return TreeMode::kClassify;
  if (name == "regress") return TreeMode::kRegress;
  throw DomainError("unknown tree mode `" + name + "`");
}

int DecisionTree::leaf_count() const {
  int n = 0;
  for (const TreeNode& node : nodes) {
    if (node.leaf()) ++n;
  }
  return n;
}

int DecisionTree::find_leaf(const State& state) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
    idx = state[static_cast<std::size_t>(node.feature)] <= node.threshold
              ? node.left
              : node.right;
  }
  return idx;
}

int DecisionTree::predict_index(const State& state) const {
  const TreeNode& leaf = nodes[static_cast<std::size_t>(find_leaf(state))];
  int best = 0;
  for (int a = 1; a < static_cast<int>(leaf.class_weights.size()); ++a) {
    if (leaf.class_weights[static_cast<std::size_t>(a)] >
        leaf.class_weights[static_cast<std::size_t>(best)]) {
      best = a;
    }
  }
  return best;
}

double DecisionTree::predict_value(const State& state) const {
  return nodes[static_cast<std::size_t>(find_leaf(state))].value;
}

Action DecisionTree::predict(const State& state) const {
  if (mode == TreeMode::kClassify) return Action::discrete(predict_index(state));
  return Action::continuous(predict_value(state));
}

double DecisionTree::training_error() const {
  double err = 0.0;
  for (const TreeNode& node : nodes) {
    if (node.leaf()) err += node.node_error;
  }
  return err;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json jnodes = nlohmann::json::array();
  for (const TreeNode& n : nodes) {
    nlohmann::json jn{{"feature", n.feature}, {"threshold", n.threshold},
                      {"left", n.left},       {"right", n.right},
                      {"value", n.value},     {"weight", n.weight},
                      {"error", n.node_error}};
    if (!n.class_weights.empty()) jn["counts"] = n.class_weights;
    jnodes.push_back(std::move(jn));
  }
  return nlohmann::json{{"mode", tree_mode_name(mode)},
                        {"n_actions", n_actions},
                        {"feature_names", feature_names},
                        {"nodes", jnodes}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree tree;
  tree.mode = tree_mode_from_name(j.at("mode").get<std::string>());
  tree.n_actions = j.at("n_actions").get<int>();
  tree.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.feature = jn.at("feature").get<int>();
    n.threshold = jn.at("threshold").get<double>();
    n.left = jn.at("left").get<int>();
    n.right = jn.at("right").get<int>();
    n.value = jn.at("value").get<double>();
    n.weight = jn.at("weight").get<double>();
    n.node_error = jn.at("error").get<double>();
    if (jn.contains("counts")) {
      n.class_weights = jn.at("counts").get<std::vector<double>>();
    }
    tree.nodes.push_back(std::move(n));
  }
  if (tree.nodes.empty()) throw ValidationError("tree: no nodes");
  return tree;
}

std::string DecisionTree::to_dot() const {
  std::ostringstream out;
  out.precision(6);
  out << "digraph decision_tree {\n  node [shape=box];\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.leaf()) {
      if (mode == TreeMode::kClassify) {
        int best = 0;
        double total = 0.0;
        for (std::size_t a = 0; a < n.class_weights.size(); ++a) {
          total += n.class_weights[a];
          if (n.class_weights[a] > n.class_weights[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(a);
          }
        }
        double share = total > 0
                           ? n.class_weights[static_cast<std::size_t>(best)] / total
                           : 0.0;
        out << "  n" << i << " [label=\"action " << best << "\\n"
            << static_cast<int>(share * 100.0) << "% of w=" << n.weight
            << "\", style=filled, fillcolor=lightgray];\n";
      } else {
        out << "  n" << i << " [label=\"value " << n.value
            << "\\nw=" << n.weight << "\", style=filled, fillcolor=lightgray];\n";
      }
    } else {
      std::string fname =
          n.feature < static_cast<int>(feature_names.size())
              ? feature_names[static_cast<std::size_t>(n.feature)]
              : "f" + std::to_string(n.feature);
      out << "  n" << i << " [label=\"" << fname << " <= " << n.threshold
          << "\"];\n";
      out << "  n" << i << " -> n" << n.left << " [label=\"yes\"];\n";
      out << "  n" << i << " -> n" << n.right << " [label=\"no\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

namespace {

// Training-side statistics of one node.
struct NodeStats {
  std::vector<double> class_weights;
  double weight = 0.0;
  double sum_wy = 0.0;
  double sum_wy2 = 0.0;

  // Weighted misclassification mass (classification) or SSE (regression)
  // when the node is a leaf.
  double leaf_error(TreeMode mode) const {
    if (mode == TreeMode::kClassify) {
      double best = 0.0;
      for (double w : class_weights) best = std::max(best, w);
      return weight - best;
    }
    if (weight <= 0) return 0.0;
    return std::max(sum_wy2 - sum_wy * sum_wy / weight, 0.0);
  }

  // Impurity mass driving split selection: weight * Gini, or SSE.
  double impurity(TreeMode mode) const {
    if (mode == TreeMode::kClassify) {
      if (weight <= 0) return 0.0;
      double sq = 0.0;
      for (double w : class_weights) sq += w * w;
      return weight - sq / weight;
    }
    return leaf_error(mode);
  }

  double mean() const { return weight > 0 ? sum_wy / weight : 0.0; }
};

NodeStats collect_stats(const WeightedDataset& data,
                        const std::vector<int>& indices) {
  NodeStats st;
  st.class_weights.assign(static_cast<std::size_t>(std::max(data.n_actions, 0)),
                          0.0);
  for (int i : indices) {
    const Sample& s = data.samples[static_cast<std::size_t>(i)];
    st.weight += s.weight;
    if (data.mode == TreeMode::kClassify) {
      st.class_weights[static_cast<std::size_t>(s.action)] += s.weight;
    } else {
      st.sum_wy += s.weight * s.target;
      st.sum_wy2 += s.weight * s.target * s.target;
    }
  }
  return st;
}

struct SplitChoice {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

constexpr double kMinGain = 1e-12;

SplitChoice best_split(const WeightedDataset& data,
                       const std::vector<int>& indices, const NodeStats& stats) {
  SplitChoice best;
  if (indices.size() < 2) return best;
  const double parent_impurity = stats.impurity(data.mode);
  if (parent_impurity <= kMinGain) return best;

  const int n_features = static_cast<int>(
      data.samples[static_cast<std::size_t>(indices[0])].state.size());
  std::vector<int> order(indices);
  const int n_actions = std::max(data.n_actions, 0);

  std::vector<double> left_cw(static_cast<std::size_t>(n_actions));
  for (int f = 0; f < n_features; ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double va = data.samples[static_cast<std::size_t>(a)].state[static_cast<std::size_t>(f)];
      double vb = data.samples[static_cast<std::size_t>(b)].state[static_cast<std::size_t>(f)];
      if (va != vb) return va < vb;
      return a < b;
    });

    std::fill(left_cw.begin(), left_cw.end(), 0.0);
    double lw = 0.0, lsq = 0.0, lsum_wy = 0.0, lsum_wy2 = 0.0;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      const Sample& s = data.samples[static_cast<std::size_t>(order[k])];
      lw += s.weight;
      if (data.mode == TreeMode::kClassify) {
        double& cw = left_cw[static_cast<std::size_t>(s.action)];
        lsq -= cw * cw;
        cw += s.weight;
        lsq += cw * cw;
      } else {
        lsum_wy += s.weight * s.target;
        lsum_wy2 += s.weight * s.target * s.target;
      }

      const double v = s.state[static_cast<std::size_t>(f)];
      const double v_next =
          data.samples[static_cast<std::size_t>(order[k + 1])].state[static_cast<std::size_t>(f)];
      if (v == v_next) continue;

      double left_impurity, right_impurity;
      if (data.mode == TreeMode::kClassify) {
        double rw = stats.weight - lw;
        double rsq = 0.0;
        for (std::size_t a = 0; a < left_cw.size(); ++a) {
          double rc = stats.class_weights[a] - left_cw[a];
          rsq += rc * rc;
        }
        left_impurity = lw > 0 ? lw - lsq / lw : 0.0;
        right_impurity = rw > 0 ? rw - rsq / rw : 0.0;
      } else {
        double rw = stats.weight - lw;
        double rsum_wy = stats.sum_wy - lsum_wy;
        double rsum_wy2 = stats.sum_wy2 - lsum_wy2;
        left_impurity = lw > 0 ? std::max(lsum_wy2 - lsum_wy * lsum_wy / lw, 0.0) : 0.0;
        right_impurity = rw > 0 ? std::max(rsum_wy2 - rsum_wy * rsum_wy / rw, 0.0) : 0.0;
      }
      const double gain = parent_impurity - left_impurity - right_impurity;
      if (gain > best.gain + kMinGain) {
        // Midpoints of near-adjacent doubles can round onto v_next, which
        // would leave the right side empty; fall back to the lower value.
        double threshold = 0.5 * (v + v_next);
        if (!(threshold < v_next)) threshold = v;
        best.valid = true;
        best.feature = f;
        best.threshold = threshold;
        best.gain = gain;
      }
    }
  }
  return best;
}

void fill_node(TreeNode& node, const NodeStats& stats, TreeMode mode) {
  node.class_weights = stats.class_weights;
  node.value = stats.mean();
  node.weight = stats.weight;
  node.node_error = stats.leaf_error(mode);
}

}  // namespace

DecisionTree fit_tree(const WeightedDataset& dataset, int max_leaves,
                      TreeMode mode, std::uint64_t /*seed*/) {
  if (max_leaves < 1) throw DomainError("fit_tree: max_leaves must be >= 1");
  WeightedDataset checked = dataset;
  checked.mode = mode;
  checked.validate();

  DecisionTree tree;
  tree.mode = mode;
  tree.n_actions = dataset.n_actions;
  tree.feature_names = dataset.feature_names;

  std::vector<int> root_indices(dataset.samples.size());
  std::iota(root_indices.begin(), root_indices.end(), 0);

  NodeStats root_stats = collect_stats(checked, root_indices);
  tree.nodes.emplace_back();
  fill_node(tree.nodes[0], root_stats, mode);

  struct OpenLeaf {
    int node;
    std::vector<int> indices;
    NodeStats stats;
    SplitChoice split;
  };
  // Ordered by (gain desc, node id asc) for deterministic best-first growth.
  auto cmp = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::set<std::pair<double, int>, decltype(cmp)> frontier(cmp);
  std::vector<OpenLeaf> open;

  auto push_leaf = [&](int node, std::vector<int> indices, NodeStats stats) {
    SplitChoice split = best_split(checked, indices, stats);
    if (!split.valid) return;
    frontier.insert({split.gain, node});
    open.push_back(OpenLeaf{node, std::move(indices), std::move(stats), split});
  };

  push_leaf(0, std::move(root_indices), std::move(root_stats));

  int leaves = 1;
  while (leaves < max_leaves && !frontier.empty()) {
    auto top = *frontier.begin();
    frontier.erase(frontier.begin());
    auto it = std::find_if(open.begin(), open.end(), [&](const OpenLeaf& l) {
      return l.node == top.second;
    });
    OpenLeaf leaf = std::move(*it);
    open.erase(it);

    std::vector<int> left_idx, right_idx;
    left_idx.reserve(leaf.indices.size());
    for (int i : leaf.indices) {
      const Sample& s = checked.samples[static_cast<std::size_t>(i)];
      if (s.state[static_cast<std::size_t>(leaf.split.feature)] <=
          leaf.split.threshold) {
        left_idx.push_back(i);
      } else {
        right_idx.push_back(i);
      }
    }

    const int left_id = static_cast<int>(tree.nodes.size());
    const int right_id = left_id + 1;
    TreeNode& parent = tree.nodes[static_cast<std::size_t>(leaf.node)];
    parent.feature = leaf.split.feature;
    parent.threshold = leaf.split.threshold;
    parent.left = left_id;
    parent.right = right_id;

    NodeStats left_stats = collect_stats(checked, left_idx);
    NodeStats right_stats = collect_stats(checked, right_idx);
    tree.nodes.emplace_back();
    fill_node(tree.nodes[static_cast<std::size_t>(left_id)], left_stats, mode);
    tree.nodes.emplace_back();
    fill_node(tree.nodes[static_cast<std::size_t>(right_id)], right_stats, mode);
    ++leaves;

    push_leaf(left_id, std::move(left_idx), std::move(left_stats));
    push_leaf(right_id, std::move(right_idx), std::move(right_stats));
  }
  return tree;
}

namespace {

struct SubtreeInfo {
  int leaves = 0;
  double error = 0.0;
};

SubtreeInfo subtree_info(const std::vector<TreeNode>& nodes, int idx) {
  const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
  if (n.leaf()) return {1, n.node_error};
  SubtreeInfo l = subtree_info(nodes, n.left);
  SubtreeInfo r = subtree_info(nodes, n.right);
  return {l.leaves + r.leaves, l.error + r.error};
}

void compact(const std::vector<TreeNode>& src, int idx, DecisionTree& dst) {
  const TreeNode& n = src[static_cast<std::size_t>(idx)];
  const int my_id = static_cast<int>(dst.nodes.size());
  dst.nodes.push_back(n);
  if (n.leaf()) {
    dst.nodes[static_cast<std::size_t>(my_id)].left = -1;
    dst.nodes[static_cast<std::size_t>(my_id)].right = -1;
    dst.nodes[static_cast<std::size_t>(my_id)].feature = -1;
    return;
  }
  const int left_id = static_cast<int>(dst.nodes.size());
  compact(src, n.left, dst);
  const int right_id = static_cast<int>(dst.nodes.size());
  compact(src, n.right, dst);
  dst.nodes[static_cast<std::size_t>(my_id)].left = left_id;
  dst.nodes[static_cast<std::size_t>(my_id)].right = right_id;
}

}  // namespace

DecisionTree ccp_prune(const DecisionTree& tree, int target_leaves) {
  if (target_leaves < 1) throw DomainError("ccp_prune: target_leaves must be >= 1");
  if (tree.leaf_count() <= target_leaves) return tree;

  std::vector<TreeNode> nodes = tree.nodes;
  int leaves = tree.leaf_count();
  // Collapsed subtrees leave orphaned entries behind; only nodes still
  // reachable from the root are collapse candidates.
  std::vector<bool> alive(nodes.size(), true);
  auto mark_dead = [&](auto&& self, int idx) -> void {
    if (idx < 0) return;
    alive[static_cast<std::size_t>(idx)] = false;
    self(self, nodes[static_cast<std::size_t>(idx)].left);
    self(self, nodes[static_cast<std::size_t>(idx)].right);
  };
  while (leaves > target_leaves) {
    int best_node = -1;
    double best_alpha = std::numeric_limits<double>::infinity();
    int best_gain_leaves = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!alive[i] || nodes[i].leaf()) continue;
      SubtreeInfo info = subtree_info(nodes, static_cast<int>(i));
      const double alpha =
          (nodes[i].node_error - info.error) / static_cast<double>(info.leaves - 1);
      if (alpha < best_alpha) {
        best_alpha = alpha;
        best_node = static_cast<int>(i);
        best_gain_leaves = info.leaves - 1;
      }
    }
    TreeNode& n = nodes[static_cast<std::size_t>(best_node)];
    mark_dead(mark_dead, n.left);
    mark_dead(mark_dead, n.right);
    n.left = -1;
    n.right = -1;
    n.feature = -1;
    leaves -= best_gain_leaves;
  }

  DecisionTree pruned;
  pruned.mode = tree.mode;
  pruned.n_actions = tree.n_actions;
  pruned.feature_names = tree.feature_names;
  compact(nodes, 0, pruned);
  return pruned;
}

}  // namespace metiskit
