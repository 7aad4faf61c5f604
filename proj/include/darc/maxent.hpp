#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "darc/mdp.hpp"

namespace darc {

// Per-timestep soft action values, laid out [t][s][a]. Values past the horizon
// are zero.
struct SoftQTable {
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> q;

  static SoftQTable zeros(std::size_t horizon, std::size_t num_states, std::size_t num_actions);
  static SoftQTable zeros_for(const TabularMDP& mdp) {
    return zeros(mdp.horizon, mdp.num_states, mdp.num_actions);
  }

  std::size_t index(std::size_t t, std::size_t s, std::size_t a) const {
    return (t * num_states + s) * num_actions + a;
  }
  double at(std::size_t t, std::size_t s, std::size_t a) const { return q[index(t, s, a)]; }
  double& at(std::size_t t, std::size_t s, std::size_t a) { return q[index(t, s, a)]; }
  std::span<const double> row(std::size_t t, std::size_t s) const {
    return {q.data() + index(t, s, 0), num_actions};
  }

  // Soft state value log sum_a exp Q_t(s, a); zero at t == horizon.
  double value(std::size_t t, std::size_t s) const;
};

// Reward of a transition (t, s, a, s'). Implementations flag whether the next
// state matters and whether -inf may come back.
struct TransitionReward {
  std::function<double(std::size_t t, std::size_t s, std::size_t a, std::size_t s_next)> fn;
  bool depends_on_next = false;
  bool extended_real = false;

  double operator()(std::size_t t, std::size_t s, std::size_t a, std::size_t s_next) const {
    return fn(t, s, a, s_next);
  }
};

// r(s, a) from the MDP's reward table.
TransitionReward plain_reward(const TabularMDP& mdp);

// r(s, a) + correction(s, a, s').
TransitionReward corrected_reward(const TabularMDP& mdp,
                                  std::function<double(std::size_t, std::size_t, std::size_t)> correction,
                                  bool extended_real);

// Exact backward recursion at temperature 1. Outcomes with zero probability
// contribute nothing even when their reward is -inf.
SoftQTable soft_value_iteration(const TabularMDP& mdp, const TransitionReward& reward);

enum class DegenerateRows {
  reject,   // throw when every action of a row is -inf
  uniform,  // all actions tie at -inf; spread mass evenly
};

// pi(a | s, t) proportional to exp Q_t(s, a).
StochasticPolicy policy_from_soft_q(const SoftQTable& q,
                                    DegenerateRows degenerate = DegenerateRows::reject);

double entropy_of(std::span<const double> probs);

struct EntropyRegReturn {
  double reward = 0.0;   // sum_t E[reward]
  double entropy = 0.0;  // sum_t E[H(pi(.|s_t))]
  double total() const { return reward + entropy; }
};

// Exact, occupancy-weighted; no sampling.
EntropyRegReturn entropy_reg_return(const TabularMDP& mdp, const StochasticPolicy& policy,
                                    const TransitionReward& reward);

// Sequential soft Bellman updates: for each transition
//   Q_t(s,a) <- (1 - lr) Q_t(s,a) + lr [reward + V_{t+1}(s')]
// with V read from the table as it is being updated. Optional per-transition
// weights multiply the step, which is capped at 1.
void apply_soft_q_update(SoftQTable& q, std::span<const Transition> batch,
                         const TransitionReward& reward, double learning_rate,
                         std::span<const double> weights = {});

SoftQTable soft_q_learning_update(const SoftQTable& q, std::span<const Transition> batch,
                                  const TransitionReward& reward, double learning_rate);

// alpha_k = alpha0 / (1 + k / tau) with k the visit count of (t, s, a).
struct LearningRateSchedule {
  double alpha0 = 0.5;
  double tau = 1000.0;
  double operator()(std::size_t visits) const {
    return alpha0 / (1.0 + static_cast<double>(visits) / tau);
  }
};

// Soft Q-table plus per-entry visit counts driving the schedule.
class SoftQLearner {
 public:
  SoftQLearner(std::size_t horizon, std::size_t num_states, std::size_t num_actions,
               LearningRateSchedule schedule = {});

  // weights, when given, scale each transition's step (importance weighting).
  void update(std::span<const Transition> batch, const TransitionReward& reward,
              std::span<const double> weights = {});

  const SoftQTable& table() const { return q_; }
  SoftQTable& table() { return q_; }
  std::size_t visits(std::size_t t, std::size_t s, std::size_t a) const {
    return visits_[q_.index(t, s, a)];
  }
  StochasticPolicy policy() const { return policy_from_soft_q(q_, DegenerateRows::uniform); }

 private:
  SoftQTable q_;
  std::vector<std::size_t> visits_;
  LearningRateSchedule schedule_;
};

void write_soft_q_csv(std::ostream& out, const SoftQTable& q);

}  // namespace darc
