#pragma once

#include <string>
#include <vector>

#include "metiskit/env.hpp"

namespace metiskit {

enum class TreeMode { kClassify, kRegress };

std::string tree_mode_name(TreeMode mode);
TreeMode tree_mode_from_name(const std::string& name);

struct Sample {
  State state;
  int action = -1;      // classification label
  double target = 0.0;  // regression label
  double weight = 1.0;
  int iteration = 0;    // collection iteration that produced the sample
};

// (state, teacher action, advantage weight) samples feeding tree fitting.
struct WeightedDataset {
  TreeMode mode = TreeMode::kClassify;
  int n_actions = 0;  // classification arity
  std::vector<std::string> feature_names;
  std::vector<Sample> samples;
  std::vector<std::string> notes;  // pipeline warnings

  void validate() const;
  double total_weight() const;
  // Per-action sample share (unweighted counts); classification only.
  std::vector<double> action_frequencies() const;

  std::string to_csv() const;
};

}  // namespace metiskit
