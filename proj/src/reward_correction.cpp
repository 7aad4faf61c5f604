#include "darc/reward_correction.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace darc {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::oracle: return "oracle";
    case Provenance::tabular: return "tabular";
    case Provenance::learned: return "learned";
  }
  return "?";
}

const char* to_string(SingleClassifier v) {
  switch (v) {
    case SingleClassifier::sas_only: return "sas_only";
    case SingleClassifier::state_only: return "state_only";
  }
  return "?";
}

double clamp_delta_r(double value, std::optional<double> bound) {
  if (!bound) return value;
  return std::clamp(value, -*bound, *bound);
}

double true_delta_r(const DomainPair& pair, std::size_t s, std::size_t a, std::size_t s_next) {
  const double pt = pair.target.p(s, a, s_next);
  const double ps = pair.source.p(s, a, s_next);
  if (pt == 0.0 && ps == 0.0) {
    throw std::domain_error(
        fmt::format("transition outside both supports (s={}, a={}, s'={})", s, a, s_next));
  }
  return log_or_neg_inf(pt) - log_or_neg_inf(ps);
}

DeltaR oracle_delta_r(const DomainPair& pair, std::optional<double> clamp_bound) {
  return {[&pair](std::size_t s, std::size_t a, std::size_t sn) {
            if (pair.target.p(s, a, sn) == 0.0 && pair.source.p(s, a, sn) == 0.0) return 0.0;
            return true_delta_r(pair, s, a, sn);
          },
          clamp_bound, Provenance::oracle};
}

namespace {

void require_fitted(const TabularClassifierPair& c) {
  if (!c.fitted) throw std::logic_error("classifier not fitted");
}

// log (n_t + lambda) - log (n_s + lambda): the logit of p(target | cell).
double cell_logit(double n_target, double n_source, double smoothing, const char* what) {
  const double t = n_target + smoothing;
  const double s = n_source + smoothing;
  if (t == 0.0 && s == 0.0) {
    throw std::domain_error(fmt::format("{} cell outside both supports", what));
  }
  return log_or_neg_inf(t) - log_or_neg_inf(s);
}

double cell_prob(double n_target, double n_source, double smoothing, const char* what) {
  const double den = n_target + n_source + 2.0 * smoothing;
  if (den == 0.0) throw std::domain_error(fmt::format("{} cell outside both supports", what));
  return (n_target + smoothing) / den;
}

TabularClassifierPair empty_pair(std::size_t S, std::size_t A, double smoothing) {
  TabularClassifierPair c;
  c.num_states = S;
  c.num_actions = A;
  c.smoothing = smoothing;
  c.sas_source.assign(S * A * S, 0.0);
  c.sas_target.assign(S * A * S, 0.0);
  c.sa_source.assign(S * A, 0.0);
  c.sa_target.assign(S * A, 0.0);
  c.ss_source.assign(S * S, 0.0);
  c.ss_target.assign(S * S, 0.0);
  c.s_source.assign(S, 0.0);
  c.s_target.assign(S, 0.0);
  return c;
}

void add_count(TabularClassifierPair& c, bool target, std::size_t s, std::size_t a,
               std::size_t sn, double w) {
  const std::size_t S = c.num_states, A = c.num_actions;
  (target ? c.sas_target : c.sas_source)[(s * A + a) * S + sn] += w;
  (target ? c.sa_target : c.sa_source)[s * A + a] += w;
  (target ? c.ss_target : c.ss_source)[s * S + sn] += w;
  (target ? c.s_target : c.s_source)[s] += w;
}

}  // namespace

TabularClassifierPair empty_classifiers(std::size_t num_states, std::size_t num_actions,
                                        double smoothing) {
  if (!(smoothing > 0.0)) throw std::invalid_argument("smoothing must be > 0");
  return empty_pair(num_states, num_actions, smoothing);
}

void record_transition(TabularClassifierPair& c, bool is_target, const Transition& tr,
                       double weight) {
  if (tr.s >= c.num_states || tr.s_next >= c.num_states || tr.a >= c.num_actions) {
    throw DimensionError("record_transition: transition out of range");
  }
  add_count(c, is_target, tr.s, tr.a, tr.s_next, weight);
  double n_src = 0.0, n_tgt = 0.0;
  for (double x : c.s_source) n_src += x;
  for (double x : c.s_target) n_tgt += x;
  c.fitted = n_src > 0.0 && n_tgt > 0.0;
}

double TabularClassifierPair::p_target_sas(std::size_t s, std::size_t a, std::size_t sn) const {
  require_fitted(*this);
  const std::size_t i = (s * num_actions + a) * num_states + sn;
  return cell_prob(sas_target[i], sas_source[i], smoothing, "(s,a,s')");
}

double TabularClassifierPair::p_target_sa(std::size_t s, std::size_t a) const {
  require_fitted(*this);
  const std::size_t i = s * num_actions + a;
  return cell_prob(sa_target[i], sa_source[i], smoothing, "(s,a)");
}

double TabularClassifierPair::p_target_ss(std::size_t s, std::size_t sn) const {
  require_fitted(*this);
  const std::size_t i = s * num_states + sn;
  return cell_prob(ss_target[i], ss_source[i], smoothing, "(s,s')");
}

double TabularClassifierPair::p_target_s(std::size_t s) const {
  require_fitted(*this);
  return cell_prob(s_target[s], s_source[s], smoothing, "(s)");
}

TabularClassifierPair fit_tabular(std::span<const Transition> source,
                                  std::span<const Transition> target, std::size_t num_states,
                                  std::size_t num_actions, double smoothing) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("fit_tabular: both buffers must be non-empty");
  }
  if (!(smoothing > 0.0)) throw std::invalid_argument("fit_tabular: smoothing must be > 0");
  TabularClassifierPair c = empty_pair(num_states, num_actions, smoothing);
  for (bool is_target : {false, true}) {
    for (const Transition& tr : is_target ? target : source) {
      if (tr.s >= num_states || tr.s_next >= num_states || tr.a >= num_actions) {
        throw DimensionError("fit_tabular: transition out of range");
      }
      add_count(c, is_target, tr.s, tr.a, tr.s_next, 1.0);
    }
  }
  c.fitted = true;
  return c;
}

TabularClassifierPair bayes_optimal_classifiers(const DomainPair& pair,
                                                std::span<const double> sa_weights) {
  return bayes_optimal_classifiers(pair, sa_weights, sa_weights);
}

TabularClassifierPair bayes_optimal_classifiers(const DomainPair& pair,
                                                std::span<const double> source_sa_weights,
                                                std::span<const double> target_sa_weights) {
  const std::size_t S = pair.source.num_states, A = pair.source.num_actions;
  if (source_sa_weights.size() != S * A || target_sa_weights.size() != S * A) {
    throw DimensionError("bayes_optimal_classifiers: one weight per (s, a) required");
  }
  TabularClassifierPair c = empty_pair(S, A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const double ws = source_sa_weights[s * A + a];
      const double wt = target_sa_weights[s * A + a];
      if (ws < 0.0 || wt < 0.0) {
        throw std::invalid_argument("bayes_optimal_classifiers: negative weight");
      }
      for (std::size_t sn = 0; sn < S; ++sn) {
        add_count(c, false, s, a, sn, ws * pair.source.p(s, a, sn));
        add_count(c, true, s, a, sn, wt * pair.target.p(s, a, sn));
      }
    }
  c.fitted = true;
  return c;
}

TabularClassifierPair swap_domains(const TabularClassifierPair& c) {
  TabularClassifierPair out = c;
  std::swap(out.sas_source, out.sas_target);
  std::swap(out.sa_source, out.sa_target);
  std::swap(out.ss_source, out.ss_target);
  std::swap(out.s_source, out.s_target);
  return out;
}

double classifier_delta_r(const TabularClassifierPair& c, std::size_t s, std::size_t a,
                          std::size_t sn, std::optional<double> clamp_bound) {
  require_fitted(c);
  const std::size_t S = c.num_states, A = c.num_actions;
  const std::size_t i = (s * A + a) * S + sn;
  const std::size_t j = s * A + a;
  const double sas = cell_logit(c.sas_target[i], c.sas_source[i], c.smoothing, "(s,a,s')");
  const double sa = cell_logit(c.sa_target[j], c.sa_source[j], c.smoothing, "(s,a)");
  return clamp_delta_r(sas - sa, clamp_bound);
}

double single_classifier_delta_r(const TabularClassifierPair& c, SingleClassifier variant,
                                 std::size_t s, std::size_t a, std::size_t sn,
                                 std::optional<double> clamp_bound) {
  require_fitted(c);
  const std::size_t S = c.num_states, A = c.num_actions;
  double v = 0.0;
  if (variant == SingleClassifier::sas_only) {
    const std::size_t i = (s * A + a) * S + sn;
    v = cell_logit(c.sas_target[i], c.sas_source[i], c.smoothing, "(s,a,s')");
  } else {
    const std::size_t i = s * S + sn;
    v = cell_logit(c.ss_target[i], c.ss_source[i], c.smoothing, "(s,s')");
  }
  return clamp_delta_r(v, clamp_bound);
}

DeltaR tabular_delta_r(const TabularClassifierPair& c, std::optional<double> clamp_bound) {
  return {[c](std::size_t s, std::size_t a, std::size_t sn) {
            return classifier_delta_r(c, s, a, sn, std::nullopt);
          },
          clamp_bound, Provenance::tabular};
}

DeltaR single_tabular_delta_r(const TabularClassifierPair& c, SingleClassifier variant,
                              std::optional<double> clamp_bound) {
  return {[c, variant](std::size_t s, std::size_t a, std::size_t sn) {
            return single_classifier_delta_r(c, variant, s, a, sn, std::nullopt);
          },
          clamp_bound, Provenance::tabular};
}

}  // namespace darc
