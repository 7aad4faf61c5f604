#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "darc/mdp.hpp"

namespace darc {

enum class Provenance { oracle, tabular, learned };

const char* to_string(Provenance p);

inline constexpr double kDefaultClampBound = 20.0;

// Clamps into [-bound, bound] when a bound is set; -inf maps to -bound.
double clamp_delta_r(double value, std::optional<double> bound);

// Reward correction as a function of (s, a, s'), in nats.
struct DeltaR {
  std::function<double(std::size_t, std::size_t, std::size_t)> fn;
  std::optional<double> clamp_bound;
  Provenance provenance = Provenance::oracle;

  double operator()(std::size_t s, std::size_t a, std::size_t s_next) const {
    return clamp_delta_r(fn(s, a, s_next), clamp_bound);
  }
};

// log p_target(s'|s,a) - log p_source(s'|s,a). -inf where only the target
// forbids the move. Throws std::domain_error when both forbid it.
double true_delta_r(const DomainPair& pair, std::size_t s, std::size_t a, std::size_t s_next);

// Holds a reference to pair. Triples outside both supports evaluate to 0 so
// the function is total (their probability is zero under either domain).
DeltaR oracle_delta_r(const DomainPair& pair, std::optional<double> clamp_bound);

// Domain classifiers by counting. Counts are reals so an exact joint can be
// loaded in place of sampled data.
struct TabularClassifierPair {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  double smoothing = 0.5;
  std::vector<double> sas_source, sas_target;  // [s][a][s']
  std::vector<double> sa_source, sa_target;    // [s][a]
  std::vector<double> ss_source, ss_target;    // [s][s'], action-unconditioned
  std::vector<double> s_source, s_target;      // [s]
  bool fitted = false;

  // p(target | s, a, s') = (n_t + lambda) / (n_t + n_s + 2 lambda).
  double p_target_sas(std::size_t s, std::size_t a, std::size_t s_next) const;
  double p_target_sa(std::size_t s, std::size_t a) const;
  double p_target_ss(std::size_t s, std::size_t s_next) const;
  double p_target_s(std::size_t s) const;
};

// Zero counts, not yet fitted.
TabularClassifierPair empty_classifiers(std::size_t num_states, std::size_t num_actions,
                                        double smoothing);
// Adds (or with negative weight removes) one observation; marks the pair fitted
// once both domains hold data.
void record_transition(TabularClassifierPair& c, bool is_target, const Transition& tr,
                       double weight = 1.0);

// Requires both buffers non-empty and smoothing > 0.
TabularClassifierPair fit_tabular(std::span<const Transition> source,
                                  std::span<const Transition> target, std::size_t num_states,
                                  std::size_t num_actions, double smoothing = 0.5);

// Classifiers set to the exact posteriors of the joint: domain ~ Bernoulli(1/2),
// (s, a) ~ sa_weights (shared by both domains), s' from that domain's
// dynamics. No smoothing: this is the infinite-data limit.
TabularClassifierPair bayes_optimal_classifiers(const DomainPair& pair,
                                                std::span<const double> sa_weights);
// Domain-specific (s, a) weights, e.g. buffers collected by different policies.
TabularClassifierPair bayes_optimal_classifiers(const DomainPair& pair,
                                                std::span<const double> source_sa_weights,
                                                std::span<const double> target_sa_weights);

// Same classifiers with the domain labels exchanged.
TabularClassifierPair swap_domains(const TabularClassifierPair& c);

// log p(t|s,a,s') - log p(t|s,a) - log p(s|s,a,s') + log p(s|s,a), clamped.
double classifier_delta_r(const TabularClassifierPair& c, std::size_t s, std::size_t a,
                          std::size_t s_next, std::optional<double> clamp_bound = kDefaultClampBound);

enum class SingleClassifier {
  sas_only,    // Eq. 3 with the (s, a) classifier dropped
  state_only,  // classifier over (s, s'), blind to the action
};

const char* to_string(SingleClassifier v);

double single_classifier_delta_r(const TabularClassifierPair& c, SingleClassifier variant,
                                 std::size_t s, std::size_t a, std::size_t s_next,
                                 std::optional<double> clamp_bound = kDefaultClampBound);

// Copies c into the returned function.
DeltaR tabular_delta_r(const TabularClassifierPair& c, std::optional<double> clamp_bound);
DeltaR single_tabular_delta_r(const TabularClassifierPair& c, SingleClassifier variant,
                              std::optional<double> clamp_bound);

}  // namespace darc
