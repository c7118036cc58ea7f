#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "metiskit/errors.hpp"

namespace metiskit {

// Fixed-length feature vector observed by policies.
using State = std::vector<double>;

// Either a discrete index into the environment's action set or a real scalar
// for regression-style outputs (e.g. queue thresholds).
struct Action {
  int index = -1;
  double value = 0.0;

  static Action discrete(int i) { return Action{i, 0.0}; }
  static Action continuous(double v) { return Action{-1, v}; }
  bool is_discrete() const { return index >= 0; }
  bool operator==(const Action&) const = default;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  // Restarts the episode; all stochastic dynamics derive from this seed.
  virtual void reset(std::uint64_t seed) = 0;

  // Reseeds stochastic dynamics without moving the current state. No-op for
  // deterministic environments.
  virtual void reseed(std::uint64_t /*seed*/) {}

  virtual State observe() const = 0;
  virtual StepOutcome step(const Action& action) = 0;
  virtual bool done() const = 0;

  // Number of discrete actions; 0 for continuous action spaces.
  virtual int action_count() const = 0;

  // Deep copy carrying the full internal state (snapshot).
  virtual std::unique_ptr<Environment> clone() const = 0;

  // Positions the environment at an externally supplied observation.
  virtual void set_state(const State&) {
    throw UnsupportedStateError("environment does not support set_state");
  }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const State& state) const = 0;

  virtual bool has_distribution() const { return false; }
  virtual std::vector<double> action_distribution(const State&) const {
    throw DomainError("policy does not expose an action distribution");
  }
};

struct TrajectoryStep {
  State state;
  Action action;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double total_return = 0.0;  // discounted under the rollout's gamma
  std::uint64_t seed = 0;
};

// Resets env with `seed` and runs `policy` for at most max_steps.
// Throws DomainError if the environment is terminal before the first step.
Trajectory rollout(Environment& env, const Policy& policy, int max_steps,
                   std::uint64_t seed, double gamma = 1.0);

// Monte-Carlo estimate of the value of `state` under `teacher`: mean over
// n_rollouts of the discounted return over `horizon` steps. `env` is a
// prototype; each rollout works on a clone positioned at `state`.
double estimate_value(const Environment& env, const Policy& teacher,
                      const State& state, int horizon, int n_rollouts,
                      double gamma, std::uint64_t seed = 0);

// As estimate_value but taking `action` first, then following the teacher
// for horizon - 1 steps.
double estimate_q(const Environment& env, const Policy& teacher,
                  const State& state, const Action& action, int horizon,
                  int n_rollouts, double gamma, std::uint64_t seed = 0);

// V(s) - min over actions of Q(s, a); the resampling weight.
double advantage_weight(const Environment& env, const Policy& teacher,
                        const State& state, int horizon, int n_rollouts,
                        double gamma, std::uint64_t seed = 0);

}  // namespace metiskit
