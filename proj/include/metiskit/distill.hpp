#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metiskit/dataset.hpp"
#include "metiskit/env.hpp"
#include "metiskit/tree.hpp"

namespace metiskit {

// Produces a fresh environment for one collection episode. Episode indices
// cycle through the configured training traces.
using EnvFactory = std::function<std::unique_ptr<Environment>(int episode)>;

struct DistillConfig {
  int dagger_iterations = 2;       // K
  int episodes_per_iteration = 8;
  int max_steps = 0;               // 0: run episodes to their natural end
  double agreement_stop = 0.98;    // student/teacher agreement early stop
  int max_leaves = 200;            // M
  int interim_leaves = 200;        // leaf budget of in-loop students
  std::size_t resample_size = 0;   // N; 0 uses the dataset size
  double gamma = 0.99;
  int horizon = 20;
  int n_rollouts = 1;
  double oversample_min_freq = 0.0;  // 0 disables the oversampling step
  TreeMode mode = TreeMode::kClassify;
  std::uint64_t seed = 1;
  std::vector<std::string> feature_names;  // carried into datasets and trees
};

// DAgger-style collection: iteration 0 is driven by the teacher; later
// iterations are driven by the current student (the given one first, then
// interim refits) while the teacher labels every visited state. Stops early
// once student agreement on fresh rollouts reaches config.agreement_stop.
WeightedDataset collect_dataset(const EnvFactory& make_env, const Policy& teacher,
                                const DecisionTree* student,
                                const DistillConfig& config);

// Sets every sample's weight to the advantage of its state, computed once per
// unique state. Continuous-action datasets keep uniform weights and a note.
WeightedDataset attach_advantages(WeightedDataset dataset,
                                  const Environment& env, const Policy& teacher,
                                  const DistillConfig& config);

// N draws with replacement, probability proportional to weight (uniform when
// all weights are zero). Output weights are all 1.
WeightedDataset resample(const WeightedDataset& dataset, std::size_t n,
                         std::uint64_t seed);

// Duplicates samples of each under-represented action until its share
// reaches min_freq. Actions entirely absent cannot be oversampled (note).
WeightedDataset oversample_actions(const WeightedDataset& dataset,
                                   double min_freq);

struct Fidelity {
  double accuracy = 0.0;
  double rmse = 0.0;
};

// Argmax agreement (classification; rmse over action indices) or RMSE of the
// real-valued outputs (regression).
Fidelity fidelity(const DecisionTree& tree, const Policy& teacher,
                  const std::vector<State>& eval_states);

struct DistillResult {
  DecisionTree tree;           // pruned to config.max_leaves
  DecisionTree unpruned_tree;  // fully grown tree before pruning
  WeightedDataset training_set;
  WeightedDataset collected;   // raw aggregated DAgger dataset
  std::vector<std::string> notes;
};

// Full conversion: collect -> advantages -> resample -> (oversample) ->
// grow unpruned -> prune to the leaf budget.
DistillResult distill_policy(const EnvFactory& make_env,
                             const Environment& env_proto, const Policy& teacher,
                             const DistillConfig& config);

// Mean per-chunk reward of one episode under `policy`.
double episode_mean_reward(Environment& env, const Policy& policy,
                           std::uint64_t seed);

// Episode scores across a set of environments (traces), parallelized.
std::vector<double> evaluate_policy(const EnvFactory& make_env,
                                    const Policy& policy, int n_episodes,
                                    std::uint64_t seed);

// States visited by the teacher on the given episodes; fidelity hold-outs.
std::vector<State> collect_states(const EnvFactory& make_env,
                                  const Policy& policy, int n_episodes,
                                  std::uint64_t seed);

}  // namespace metiskit
