#include "metiskit/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include "metiskit/rng.hpp"
#include "metiskit/threads.hpp"

namespace metiskit {

namespace {

std::string state_key(const State& s) {
  return std::string(reinterpret_cast<const char*>(s.data()),
                     s.size() * sizeof(double));
}

std::string format_state(const State& s) {
  std::ostringstream out;
  out.precision(10);
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out << ", ";
    out << s[i];
  }
  out << ']';
  return out.str();
}

// One collection episode: `driver` picks the executed action, the teacher
// labels every visited state.
struct EpisodeData {
  std::vector<Sample> samples;
  int agreements = 0;
  int steps = 0;
};

EpisodeData run_episode(Environment& env, const Policy& teacher,
                        const Policy* driver, int max_steps, int iteration,
                        std::uint64_t seed, TreeMode mode) {
  env.reset(seed);
  EpisodeData out;
  const int cap = max_steps > 0 ? max_steps : std::numeric_limits<int>::max();
  for (int t = 0; t < cap && !env.done(); ++t) {
    State s = env.observe();
    Action label;
    try {
      label = teacher.act(s);
    } catch (const std::exception& e) {
      throw ValidationError(std::string("collect_dataset: teacher failed at state ") +
                            format_state(s) + ": " + e.what());
    }
    Action executed = label;
    if (driver != nullptr) {
      executed = driver->act(s);
      if (executed == label) ++out.agreements;
    }
    Sample sample;
    sample.state = std::move(s);
    if (mode == TreeMode::kClassify) {
      sample.action = label.index;
    } else {
      sample.target = label.value;
    }
    sample.iteration = iteration;
    out.samples.push_back(std::move(sample));
    ++out.steps;
    env.step(executed);
  }
  return out;
}

}  // namespace

WeightedDataset collect_dataset(const EnvFactory& make_env, const Policy& teacher,
                                const DecisionTree* student,
                                const DistillConfig& config) {
  if (config.dagger_iterations < 1) {
    throw DomainError("collect_dataset: dagger_iterations must be >= 1");
  }
  if (config.episodes_per_iteration < 1) {
    throw DomainError("collect_dataset: episodes_per_iteration must be >= 1");
  }

  WeightedDataset dataset;
  dataset.mode = config.mode;
  dataset.feature_names = config.feature_names;

  DecisionTree interim;
  const DecisionTree* current_student = student;

  int episode_counter = 0;
  for (int iter = 0; iter < config.dagger_iterations; ++iter) {
    const bool teacher_drives = iter == 0;
    if (!teacher_drives && current_student == nullptr) {
      interim = fit_tree(dataset, config.interim_leaves, config.mode, config.seed);
      current_student = &interim;
    }
    std::optional<TreePolicy> student_policy;
    if (!teacher_drives) student_policy.emplace(*current_student);

    int agreements = 0;
    int steps = 0;
    for (int ep = 0; ep < config.episodes_per_iteration; ++ep, ++episode_counter) {
      auto env = make_env(episode_counter);
      if (dataset.n_actions == 0) dataset.n_actions = env->action_count();
      EpisodeData data = run_episode(
          *env, teacher, student_policy ? &*student_policy : nullptr,
          config.max_steps, iter,
          Rng::mix(config.seed, static_cast<std::uint64_t>(episode_counter)),
          config.mode);
      agreements += data.agreements;
      steps += data.steps;
      for (Sample& s : data.samples) {
        dataset.samples.push_back(std::move(s));
      }
    }

    if (!teacher_drives && steps > 0) {
      const double agreement = static_cast<double>(agreements) / steps;
      if (agreement >= config.agreement_stop) {
        dataset.notes.push_back(
            "collect: early stop after iteration " + std::to_string(iter) +
            " (agreement " + std::to_string(agreement) + ")");
        break;
      }
    }

    // Refit the interim student from the aggregate for the next iteration.
    if (iter + 1 < config.dagger_iterations && iter >= 1) {
      interim = fit_tree(dataset, config.interim_leaves, config.mode, config.seed);
      current_student = &interim;
    }
  }
  return dataset;
}

WeightedDataset attach_advantages(WeightedDataset dataset,
                                  const Environment& env, const Policy& teacher,
                                  const DistillConfig& config) {
  dataset.validate();
  if (dataset.mode == TreeMode::kRegress || env.action_count() <= 0) {
    for (Sample& s : dataset.samples) s.weight = 1.0;
    dataset.notes.push_back(
        "advantages: continuous action space, keeping uniform weights");
    return dataset;
  }

  // Deduplicate states; each unique state is rolled out once.
  std::map<std::string, std::size_t> unique;
  std::vector<const State*> states;
  std::vector<std::size_t> sample_to_unique(dataset.samples.size());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const State& s = dataset.samples[i].state;
    auto [it, inserted] = unique.emplace(state_key(s), states.size());
    if (inserted) states.push_back(&s);
    sample_to_unique[i] = it->second;
  }

  std::vector<double> weights(states.size(), 0.0);
  parallel_for(states.size(), [&](std::size_t i) {
    weights[i] = advantage_weight(env, teacher, *states[i], config.horizon,
                                  config.n_rollouts, config.gamma,
                                  Rng::mix(config.seed, 0x5eedull + i));
  });

  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    // Monte-Carlo noise can leave slightly negative estimates.
    dataset.samples[i].weight = std::max(weights[sample_to_unique[i]], 0.0);
  }
  return dataset;
}

WeightedDataset resample(const WeightedDataset& dataset, std::size_t n,
                         std::uint64_t seed) {
  dataset.validate();
  if (n == 0) throw DomainError("resample: N must be >= 1");

  std::vector<double> cumulative(dataset.samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    total += dataset.samples[i].weight;
    cumulative[i] = total;
  }

  WeightedDataset out;
  out.mode = dataset.mode;
  out.n_actions = dataset.n_actions;
  out.feature_names = dataset.feature_names;
  out.notes = dataset.notes;
  out.samples.reserve(n);

  Rng rng = Rng::stream(seed, 0x7e5a);
  const bool uniform = total <= 0.0;
  if (uniform) {
    out.notes.push_back("resample: all weights zero, falling back to uniform");
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t idx;
    if (uniform) {
      idx = static_cast<std::size_t>(rng.below(dataset.samples.size()));
    } else {
      const double u = rng.uniform() * total;
      idx = static_cast<std::size_t>(
          std::distance(cumulative.begin(),
                        std::upper_bound(cumulative.begin(), cumulative.end(), u)));
      if (idx >= dataset.samples.size()) idx = dataset.samples.size() - 1;
    }
    Sample s = dataset.samples[idx];
    s.weight = 1.0;
    out.samples.push_back(std::move(s));
  }
  return out;
}

WeightedDataset oversample_actions(const WeightedDataset& dataset,
                                   double min_freq) {
  dataset.validate();
  if (dataset.mode != TreeMode::kClassify) {
    throw DomainError("oversample_actions: requires discrete labels");
  }
  if (!(min_freq > 0.0) ||
      min_freq >= 1.0 / static_cast<double>(dataset.n_actions)) {
    throw DomainError("oversample_actions: need 0 < min_freq < 1/|A|");
  }

  WeightedDataset out = dataset;
  const double n = static_cast<double>(dataset.samples.size());
  std::vector<std::vector<std::size_t>> by_action(
      static_cast<std::size_t>(dataset.n_actions));
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_action[static_cast<std::size_t>(dataset.samples[i].action)].push_back(i);
  }

  for (int a = 0; a < dataset.n_actions; ++a) {
    const auto& members = by_action[static_cast<std::size_t>(a)];
    const double count = static_cast<double>(members.size());
    if (members.empty()) {
      out.notes.push_back("oversample: action " + std::to_string(a) +
                          " absent from the dataset, cannot be oversampled");
      continue;
    }
    const double freq = count / n;
    if (freq >= min_freq) continue;
    // Duplicates needed so (count + d) / (n + d) >= min_freq.
    const auto dups = static_cast<std::size_t>(
        std::ceil((min_freq * n - count) / (1.0 - min_freq)));
    for (std::size_t k = 0; k < dups; ++k) {
      out.samples.push_back(dataset.samples[members[k % members.size()]]);
    }
  }
  return out;
}

Fidelity fidelity(const DecisionTree& tree, const Policy& teacher,
                  const std::vector<State>& eval_states) {
  if (eval_states.empty()) throw DomainError("fidelity: empty evaluation set");
  Fidelity result;
  double se = 0.0;
  int agree = 0;
  for (const State& s : eval_states) {
    const Action label = teacher.act(s);
    if (tree.mode == TreeMode::kClassify) {
      const int pred = tree.predict_index(s);
      if (pred == label.index) ++agree;
      const double d = static_cast<double>(pred - label.index);
      se += d * d;
    } else {
      const double d = tree.predict_value(s) - label.value;
      se += d * d;
    }
  }
  result.accuracy =
      tree.mode == TreeMode::kClassify
          ? static_cast<double>(agree) / static_cast<double>(eval_states.size())
          : 0.0;
  result.rmse = std::sqrt(se / static_cast<double>(eval_states.size()));
  return result;
}

DistillResult distill_policy(const EnvFactory& make_env,
                             const Environment& env_proto, const Policy& teacher,
                             const DistillConfig& config) {
  DistillResult result;
  result.collected = collect_dataset(make_env, teacher, nullptr, config);
  WeightedDataset weighted =
      attach_advantages(result.collected, env_proto, teacher, config);
  const std::size_t n =
      config.resample_size > 0 ? config.resample_size : weighted.samples.size();
  result.training_set = resample(weighted, n, Rng::mix(config.seed, 0x4e5a));
  if (config.oversample_min_freq > 0.0 && config.mode == TreeMode::kClassify) {
    result.training_set =
        oversample_actions(result.training_set, config.oversample_min_freq);
  }
  result.unpruned_tree = fit_tree(result.training_set,
                                  std::numeric_limits<int>::max(), config.mode,
                                  config.seed);
  result.tree = ccp_prune(result.unpruned_tree, config.max_leaves);
  result.notes = result.training_set.notes;
  return result;
}

double episode_mean_reward(Environment& env, const Policy& policy,
                           std::uint64_t seed) {
  Trajectory traj =
      rollout(env, policy, std::numeric_limits<int>::max(), seed, 1.0);
  if (traj.steps.empty()) return 0.0;
  return traj.total_return / static_cast<double>(traj.steps.size());
}

std::vector<double> evaluate_policy(const EnvFactory& make_env,
                                    const Policy& policy, int n_episodes,
                                    std::uint64_t seed) {
  std::vector<double> scores(static_cast<std::size_t>(n_episodes), 0.0);
  parallel_for(static_cast<std::size_t>(n_episodes), [&](std::size_t i) {
    auto env = make_env(static_cast<int>(i));
    scores[i] = episode_mean_reward(*env, policy, Rng::mix(seed, i));
  });
  return scores;
}

std::vector<State> collect_states(const EnvFactory& make_env,
                                  const Policy& policy, int n_episodes,
                                  std::uint64_t seed) {
  std::vector<std::vector<State>> per_episode(
      static_cast<std::size_t>(n_episodes));
  parallel_for(static_cast<std::size_t>(n_episodes), [&](std::size_t i) {
    auto env = make_env(static_cast<int>(i));
    Trajectory traj = rollout(*env, policy, std::numeric_limits<int>::max(),
                              Rng::mix(seed, i), 1.0);
    for (TrajectoryStep& step : traj.steps) {
      per_episode[i].push_back(std::move(step.state));
    }
  });
  std::vector<State> states;
  for (auto& chunk : per_episode) {
    for (State& s : chunk) states.push_back(std::move(s));
  }
  return states;
}

}  // namespace metiskit
