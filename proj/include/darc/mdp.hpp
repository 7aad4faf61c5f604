#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "darc/rng.hpp"

namespace darc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// log with log(0) = -inf.
double log_or_neg_inf(double x);

// log(sum(exp(v))) that tolerates -inf entries; returns -inf for an all -inf input.
double log_sum_exp(std::span<const double> values);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Finite-horizon MDP with dense tables. Transition is laid out [s][a][s'],
// reward [s][a].
struct TabularMDP {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t horizon = 1;
  double discount = 1.0;
  std::vector<double> transition;
  std::vector<double> reward;
  std::vector<double> initial_dist;

  static TabularMDP zeros(std::size_t num_states, std::size_t num_actions, std::size_t horizon,
                          double discount = 1.0);

  std::size_t sa_index(std::size_t s, std::size_t a) const { return s * num_actions + a; }

  double p(std::size_t s, std::size_t a, std::size_t s_next) const {
    return transition[sa_index(s, a) * num_states + s_next];
  }
  double& p(std::size_t s, std::size_t a, std::size_t s_next) {
    return transition[sa_index(s, a) * num_states + s_next];
  }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {transition.data() + sa_index(s, a) * num_states, num_states};
  }
  std::span<double> row(std::size_t s, std::size_t a) {
    return {transition.data() + sa_index(s, a) * num_states, num_states};
  }
  double r(std::size_t s, std::size_t a) const { return reward[sa_index(s, a)]; }
  double& r(std::size_t s, std::size_t a) { return reward[sa_index(s, a)]; }
};

struct Violation {
  std::string what;
  std::optional<std::size_t> s, a, s_next;
  double magnitude = 0.0;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate_mdp(const TabularMDP& mdp);

struct DomainPair {
  TabularMDP source;
  TabularMDP target;
  bool support_ok = false;
};

// Throws std::invalid_argument when source and target disagree on anything
// other than the dynamics.
DomainPair make_domain_pair(TabularMDP source, TabularMDP target);

struct SupportTriple {
  std::size_t s, a, s_next;
  bool operator==(const SupportTriple&) const = default;
};

struct SupportCheck {
  bool ok = true;
  std::vector<SupportTriple> violations;
};

// Target support must be contained in source support. Caches the verdict in
// pair.support_ok.
SupportCheck check_support(DomainPair& pair);
SupportCheck check_support(const TabularMDP& source, const TabularMDP& target);

struct Transition {
  std::size_t s = 0;
  std::size_t a = 0;
  std::size_t s_next = 0;
  double r = 0.0;
  std::size_t t = 0;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

using Trajectory = std::vector<Transition>;

// Time-indexed policy, probs laid out [t][s][a].
struct StochasticPolicy {
  std::size_t horizon = 0;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> probs;

  static StochasticPolicy uniform(std::size_t horizon, std::size_t num_states,
                                  std::size_t num_actions);
  static StochasticPolicy uniform_for(const TabularMDP& mdp) {
    return uniform(mdp.horizon, mdp.num_states, mdp.num_actions);
  }

  std::size_t index(std::size_t t, std::size_t s, std::size_t a) const {
    return (t * num_states + s) * num_actions + a;
  }
  double prob(std::size_t t, std::size_t s, std::size_t a) const { return probs[index(t, s, a)]; }
  double& prob(std::size_t t, std::size_t s, std::size_t a) { return probs[index(t, s, a)]; }
  std::span<const double> row(std::size_t t, std::size_t s) const {
    return {probs.data() + index(t, s, 0), num_actions};
  }
  std::span<double> row(std::size_t t, std::size_t s) {
    return {probs.data() + index(t, s, 0), num_actions};
  }
};

// Empty when every row of the policy is a distribution.
ValidationReport validate_policy(const StochasticPolicy& policy);

void check_dimensions(const TabularMDP& mdp, const StochasticPolicy& policy);

Trajectory sample_trajectory(const TabularMDP& mdp, const StochasticPolicy& policy, Rng& rng);

// log p_1(s_0) + sum_t [log pi(a_t|s_t) + log p(s_{t+1}|s_t,a_t)]; -inf on any zero factor.
double trajectory_log_prob(const TabularMDP& mdp, const StochasticPolicy& policy,
                           const Trajectory& traj);

// Same as above but with the policy factor omitted (dynamics and initial state only).
double dynamics_log_prob(const TabularMDP& mdp, const Trajectory& traj);

// Exact state-action occupancy, laid out [t][s][a]; each time slice sums to 1.
using Occupancy = std::vector<double>;
Occupancy occupancy_measure(const TabularMDP& mdp, const StochasticPolicy& policy);

inline double occupancy_at(const Occupancy& occ, const TabularMDP& mdp, std::size_t t,
                           std::size_t s, std::size_t a) {
  return occ[(t * mdp.num_states + s) * mdp.num_actions + a];
}

// Distribution of the final state s_H after the last action.
std::vector<double> final_state_distribution(const TabularMDP& mdp,
                                             const StochasticPolicy& policy);

// Calls visit(traj, log_weight) for every trajectory with positive probability.
// With a policy the weight is the full trajectory log-probability; without
// one every action is enumerated with weight 1 and only the dynamics count.
// Throws std::length_error when the support holds more than max_trajectories.
using TrajectoryVisitor = std::function<void(const Trajectory&, double)>;
void enumerate_trajectories(const TabularMDP& mdp, const StochasticPolicy* policy,
                            const TrajectoryVisitor& visit, std::size_t max_trajectories = 100000);

std::size_t count_trajectories(const TabularMDP& mdp, const StochasticPolicy* policy);

// Plain-text tabular format, 17 significant digits.
std::string write_mdp(const TabularMDP& mdp);
void write_mdp(std::ostream& out, const TabularMDP& mdp);
TabularMDP read_mdp(std::istream& in);
TabularMDP read_mdp(const std::string& text);

}  // namespace darc
