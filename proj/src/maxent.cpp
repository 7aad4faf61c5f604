#include "darc/maxent.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace darc {

SoftQTable SoftQTable::zeros(std::size_t horizon, std::size_t num_states,
                             std::size_t num_actions) {
  SoftQTable t;
  t.horizon = horizon;
  t.num_states = num_states;
  t.num_actions = num_actions;
  t.q.assign(horizon * num_states * num_actions, 0.0);
  return t;
}

double SoftQTable::value(std::size_t t, std::size_t s) const {
  if (t >= horizon) return 0.0;
  return log_sum_exp(row(t, s));
}

TransitionReward plain_reward(const TabularMDP& mdp) {
  return {[&mdp](std::size_t, std::size_t s, std::size_t a, std::size_t) { return mdp.r(s, a); },
          false, false};
}

TransitionReward corrected_reward(
    const TabularMDP& mdp, std::function<double(std::size_t, std::size_t, std::size_t)> correction,
    bool extended_real) {
  return {[&mdp, correction = std::move(correction)](std::size_t, std::size_t s, std::size_t a,
                                                     std::size_t sn) {
            return mdp.r(s, a) + correction(s, a, sn);
          },
          true, extended_real};
}

SoftQTable soft_value_iteration(const TabularMDP& mdp, const TransitionReward& reward) {
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  SoftQTable q = SoftQTable::zeros_for(mdp);
  std::vector<double> next_v(S, 0.0);
  for (std::size_t t = mdp.horizon; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        double acc = 0.0;
        auto row = mdp.row(s, a);
        for (std::size_t sn = 0; sn < S; ++sn) {
          if (!(row[sn] > 0.0)) continue;  // 0 * (-inf) := 0
          acc += row[sn] * (reward(t, s, a, sn) + next_v[sn]);
        }
        q.at(t, s, a) = acc;
      }
    }
    for (std::size_t s = 0; s < S; ++s) next_v[s] = q.value(t, s);
  }
  return q;
}

StochasticPolicy policy_from_soft_q(const SoftQTable& q, DegenerateRows degenerate) {
  StochasticPolicy pi = StochasticPolicy::uniform(q.horizon, q.num_states, q.num_actions);
  for (std::size_t t = 0; t < q.horizon; ++t) {
    for (std::size_t s = 0; s < q.num_states; ++s) {
      auto qrow = q.row(t, s);
      const double v = log_sum_exp(qrow);
      auto prow = pi.row(t, s);
      if (v == kNegInf) {
        if (degenerate == DegenerateRows::reject) {
          throw std::domain_error(fmt::format(
              "state unreachable under any admissible action (t={}, s={})", t, s));
        }
        continue;  // keep the uniform row
      }
      for (std::size_t a = 0; a < q.num_actions; ++a) prow[a] = std::exp(qrow[a] - v);
    }
  }
  return pi;
}

double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

EntropyRegReturn entropy_reg_return(const TabularMDP& mdp, const StochasticPolicy& policy,
                                    const TransitionReward& reward) {
  Occupancy occ = occupancy_measure(mdp, policy);
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  EntropyRegReturn out;
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double state_mass = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double w = occ[(t * S + s) * A + a];
        state_mass += w;
        if (w == 0.0) continue;
        double expected = 0.0;
        auto row = mdp.row(s, a);
        for (std::size_t sn = 0; sn < S; ++sn) {
          if (row[sn] > 0.0) expected += row[sn] * reward(t, s, a, sn);
        }
        out.reward += w * expected;
      }
      if (state_mass > 0.0) out.entropy += state_mass * entropy_of(policy.row(t, s));
    }
  }
  return out;
}

void apply_soft_q_update(SoftQTable& q, std::span<const Transition> batch,
                         const TransitionReward& reward, double learning_rate,
                         std::span<const double> weights) {
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) {
    throw std::invalid_argument("soft Q update: learning rate must lie in [0, 1]");
  }
  if (!weights.empty() && weights.size() != batch.size()) {
    throw std::invalid_argument("soft Q update: one weight per transition required");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    if (tr.t >= q.horizon || tr.s >= q.num_states || tr.s_next >= q.num_states ||
        tr.a >= q.num_actions) {
      throw DimensionError(fmt::format(
          "soft Q update: transition (t={}, s={}, a={}, s'={}) out of range", tr.t, tr.s, tr.a,
          tr.s_next));
    }
    const double step = std::min(1.0, learning_rate * (weights.empty() ? 1.0 : weights[i]));
    if (step == 0.0) continue;
    const double target = reward(tr.t, tr.s, tr.a, tr.s_next) + q.value(tr.t + 1, tr.s_next);
    double& cell = q.at(tr.t, tr.s, tr.a);
    cell = step == 1.0 ? target : (1.0 - step) * cell + step * target;
  }
}

SoftQTable soft_q_learning_update(const SoftQTable& q, std::span<const Transition> batch,
                                  const TransitionReward& reward, double learning_rate) {
  SoftQTable out = q;
  apply_soft_q_update(out, batch, reward, learning_rate);
  return out;
}

SoftQLearner::SoftQLearner(std::size_t horizon, std::size_t num_states, std::size_t num_actions,
                           LearningRateSchedule schedule)
    : q_(SoftQTable::zeros(horizon, num_states, num_actions)),
      visits_(q_.q.size(), 0),
      schedule_(schedule) {}

void SoftQLearner::update(std::span<const Transition> batch, const TransitionReward& reward,
                          std::span<const double> weights) {
  if (!weights.empty() && weights.size() != batch.size()) {
    throw std::invalid_argument("soft Q learner: one weight per transition required");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    if (tr.t >= q_.horizon || tr.s >= q_.num_states || tr.a >= q_.num_actions) {
      throw DimensionError("soft Q learner: transition out of range");
    }
    std::size_t& k = visits_[q_.index(tr.t, tr.s, tr.a)];
    const double alpha = schedule_(k);
    ++k;
    std::span<const Transition> one(&tr, 1);
    if (weights.empty()) {
      apply_soft_q_update(q_, one, reward, alpha);
    } else {
      apply_soft_q_update(q_, one, reward, alpha, weights.subspan(i, 1));
    }
  }
}

void write_soft_q_csv(std::ostream& out, const SoftQTable& q) {
  out << "t,s,a,q\n";
  for (std::size_t t = 0; t < q.horizon; ++t)
    for (std::size_t s = 0; s < q.num_states; ++s)
      for (std::size_t a = 0; a < q.num_actions; ++a)
        out << fmt::format("{},{},{},{:.17g}\n", t, s, a, q.at(t, s, a));
}

}  // namespace darc
