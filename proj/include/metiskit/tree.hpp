#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "metiskit/dataset.hpp"
#include "metiskit/env.hpp"

namespace metiskit {

struct TreeNode {
  int feature = -1;  // split feature; -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Training statistics, kept for pruning and rendering.
  std::vector<double> class_weights;  // classification: weighted label counts
  double value = 0.0;                 // regression: weighted mean
  double weight = 0.0;                // total sample weight at the node
  double node_error = 0.0;            // training error if collapsed to a leaf

  bool leaf() const { return left < 0; }
};

// Binary axis-aligned tree. Internal nodes route `x[feature] <= threshold`
// to the left child. Prediction is a pure function of the state vector.
class DecisionTree {
 public:
  TreeMode mode = TreeMode::kClassify;
  int n_actions = 0;
  std::vector<std::string> feature_names;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int leaf_count() const;
  int find_leaf(const State& state) const;
  int predict_index(const State& state) const;
  double predict_value(const State& state) const;
  Action predict(const State& state) const;

  // Sum of leaf training errors (weighted misclassification mass or SSE).
  double training_error() const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);
  std::string to_dot() const;
};

// Greedy best-first CART. Classification minimizes weighted Gini, regression
// maximizes variance reduction. Growth stops at max_leaves or pure nodes.
// Tie-break: lowest feature index, then lowest threshold.
DecisionTree fit_tree(const WeightedDataset& dataset, int max_leaves,
                      TreeMode mode, std::uint64_t seed = 0);

// Weakest-link pruning: repeatedly collapses the internal node with minimal
// per-leaf training-error increase until leaf_count() <= target_leaves.
DecisionTree ccp_prune(const DecisionTree& tree, int target_leaves);

class TreePolicy : public Policy {
 public:
  explicit TreePolicy(const DecisionTree& tree) : tree_(&tree) {}
  Action act(const State& state) const override { return tree_->predict(state); }

 private:
  const DecisionTree* tree_;
};

}  // namespace metiskit
