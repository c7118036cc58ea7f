#include "metiskit/env.hpp"

#include <cmath>
#include <limits>

#include "metiskit/rng.hpp"

namespace metiskit {

Trajectory rollout(Environment& env, const Policy& policy, int max_steps,
                   std::uint64_t seed, double gamma) {
  if (max_steps < 1) throw DomainError("rollout: max_steps must be >= 1");
  env.reset(seed);
  if (env.done()) {
    throw DomainError("rollout: environment is terminal before the first step");
  }

  Trajectory traj;
  traj.seed = seed;
  double discount = 1.0;
  for (int t = 0; t < max_steps && !env.done(); ++t) {
    State s = env.observe();
    Action a = policy.act(s);
    StepOutcome out = env.step(a);
    traj.steps.push_back(TrajectoryStep{std::move(s), a, out.reward});
    traj.total_return += discount * out.reward;
    discount *= gamma;
    if (out.done) break;
  }
  return traj;
}

namespace {

// Discounted return of following `teacher` for `steps` env steps.
double follow_teacher(Environment& env, const Policy& teacher, int steps,
                      double gamma, double discount = 1.0) {
  double total = 0.0;
  for (int t = 0; t < steps && !env.done(); ++t) {
    StepOutcome out = env.step(teacher.act(env.observe()));
    total += discount * out.reward;
    discount *= gamma;
    if (out.done) break;
  }
  return total;
}

}  // namespace

double estimate_value(const Environment& env, const Policy& teacher,
                      const State& state, int horizon, int n_rollouts,
                      double gamma, std::uint64_t seed) {
  if (horizon < 1) throw DomainError("estimate_value: horizon must be >= 1");
  if (n_rollouts < 1) throw DomainError("estimate_value: n_rollouts must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw DomainError("estimate_value: gamma must be in (0, 1]");
  }
  double total = 0.0;
  for (int k = 0; k < n_rollouts; ++k) {
    auto sim = env.clone();
    sim->set_state(state);
    sim->reseed(Rng::mix(seed, static_cast<std::uint64_t>(k)));
    total += follow_teacher(*sim, teacher, horizon, gamma);
  }
  return total / n_rollouts;
}

double estimate_q(const Environment& env, const Policy& teacher,
                  const State& state, const Action& action, int horizon,
                  int n_rollouts, double gamma, std::uint64_t seed) {
  if (horizon < 1) throw DomainError("estimate_q: horizon must be >= 1");
  if (n_rollouts < 1) throw DomainError("estimate_q: n_rollouts must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw DomainError("estimate_q: gamma must be in (0, 1]");
  }
  if (action.is_discrete() &&
      (action.index >= env.action_count() && env.action_count() > 0)) {
    throw DomainError("estimate_q: action index out of range");
  }
  double total = 0.0;
  for (int k = 0; k < n_rollouts; ++k) {
    auto sim = env.clone();
    sim->set_state(state);
    sim->reseed(Rng::mix(seed, static_cast<std::uint64_t>(k)));
    StepOutcome first = sim->step(action);
    double ret = first.reward;
    if (!first.done) {
      ret += follow_teacher(*sim, teacher, horizon - 1, gamma, gamma);
    }
    total += ret;
  }
  return total / n_rollouts;
}

double advantage_weight(const Environment& env, const Policy& teacher,
                        const State& state, int horizon, int n_rollouts,
                        double gamma, std::uint64_t seed) {
  const int n_actions = env.action_count();
  if (n_actions <= 0) {
    throw DomainError("advantage_weight: requires a discrete action space");
  }
  const double value =
      estimate_value(env, teacher, state, horizon, n_rollouts, gamma, seed);
  double min_q = std::numeric_limits<double>::infinity();
  for (int a = 0; a < n_actions; ++a) {
    double q = estimate_q(env, teacher, state, Action::discrete(a), horizon,
                          n_rollouts, gamma, seed);
    if (q < min_q) min_q = q;
  }
  return value - min_q;
}

}  // namespace metiskit
