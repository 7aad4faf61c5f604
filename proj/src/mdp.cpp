#include "darc/mdp.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace darc {

namespace {

constexpr double kRowTolerance = 1e-9;

}  // namespace

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  if (hi == kPosInf) return kPosInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

TabularMDP TabularMDP::zeros(std::size_t num_states, std::size_t num_actions,
                             std::size_t horizon, double discount) {
  TabularMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.horizon = horizon;
  m.discount = discount;
  m.transition.assign(num_states * num_actions * num_states, 0.0);
  m.reward.assign(num_states * num_actions, 0.0);
  m.initial_dist.assign(num_states, 0.0);
  return m;
}

ValidationReport validate_mdp(const TabularMDP& mdp) {
  ValidationReport report;
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  if (S == 0) report.push_back({"num_states must be positive", {}, {}, {}, 0.0});
  if (A == 0) report.push_back({"num_actions must be positive", {}, {}, {}, 0.0});
  if (mdp.horizon == 0) report.push_back({"horizon must be positive", {}, {}, {}, 0.0});
  if (!(mdp.discount > 0.0 && mdp.discount <= 1.0)) {
    report.push_back({"discount outside (0, 1]", {}, {}, {}, mdp.discount});
  }
  if (mdp.transition.size() != S * A * S || mdp.reward.size() != S * A ||
      mdp.initial_dist.size() != S) {
    report.push_back({"table sizes do not match dimensions", {}, {}, {}, 0.0});
    return report;
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double total = 0.0;
      for (std::size_t sn = 0; sn < S; ++sn) {
        double v = mdp.p(s, a, sn);
        if (!(v >= 0.0 && v <= 1.0)) {
          report.push_back({"transition probability outside [0, 1]", s, a, sn, v});
        }
        total += v;
      }
      if (std::abs(total - 1.0) > kRowTolerance) {
        report.push_back({"transition row does not sum to 1", s, a, {}, 1.0 - total});
      }
      if (!std::isfinite(mdp.r(s, a))) {
        report.push_back({"reward not finite", s, a, {}, mdp.r(s, a)});
      }
    }
  }
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double v = mdp.initial_dist[s];
    if (!(v >= 0.0 && v <= 1.0)) {
      report.push_back({"initial probability outside [0, 1]", s, {}, {}, v});
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kRowTolerance) {
    report.push_back({"initial distribution does not sum to 1", {}, {}, {}, 1.0 - total});
  }
  return report;
}

DomainPair make_domain_pair(TabularMDP source, TabularMDP target) {
  if (source.num_states != target.num_states || source.num_actions != target.num_actions) {
    throw std::invalid_argument("domain pair: state/action spaces differ");
  }
  if (source.horizon != target.horizon || source.discount != target.discount) {
    throw std::invalid_argument("domain pair: horizon or discount differ");
  }
  if (source.reward != target.reward) {
    throw std::invalid_argument("domain pair: reward tables differ");
  }
  if (source.initial_dist != target.initial_dist) {
    throw std::invalid_argument("domain pair: initial distributions differ");
  }
  DomainPair pair{std::move(source), std::move(target), false};
  check_support(pair);
  return pair;
}

SupportCheck check_support(const TabularMDP& source, const TabularMDP& target) {
  SupportCheck out;
  for (std::size_t s = 0; s < source.num_states; ++s) {
    for (std::size_t a = 0; a < source.num_actions; ++a) {
      for (std::size_t sn = 0; sn < source.num_states; ++sn) {
        if (target.p(s, a, sn) > 0.0 && !(source.p(s, a, sn) > 0.0)) {
          out.violations.push_back({s, a, sn});
        }
      }
    }
  }
  out.ok = out.violations.empty();
  return out;
}

SupportCheck check_support(DomainPair& pair) {
  SupportCheck out = check_support(pair.source, pair.target);
  pair.support_ok = out.ok;
  return out;
}

StochasticPolicy StochasticPolicy::uniform(std::size_t horizon, std::size_t num_states,
                                           std::size_t num_actions) {
  StochasticPolicy p;
  p.horizon = horizon;
  p.num_states = num_states;
  p.num_actions = num_actions;
  p.probs.assign(horizon * num_states * num_actions, 1.0 / static_cast<double>(num_actions));
  return p;
}

ValidationReport validate_policy(const StochasticPolicy& policy) {
  ValidationReport report;
  if (policy.probs.size() != policy.horizon * policy.num_states * policy.num_actions) {
    report.push_back({"policy table size does not match dimensions", {}, {}, {}, 0.0});
    return report;
  }
  for (std::size_t t = 0; t < policy.horizon; ++t) {
    for (std::size_t s = 0; s < policy.num_states; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < policy.num_actions; ++a) {
        double v = policy.prob(t, s, a);
        if (!(v >= 0.0)) report.push_back({"negative policy probability", s, a, {}, v});
        total += v;
      }
      if (std::abs(total - 1.0) > kRowTolerance) {
        report.push_back({fmt::format("policy row t={} does not sum to 1", t), s, {}, {},
                          1.0 - total});
      }
    }
  }
  return report;
}

void check_dimensions(const TabularMDP& mdp, const StochasticPolicy& policy) {
  if (policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions ||
      policy.horizon < mdp.horizon) {
    throw DimensionError(fmt::format(
        "policy dimensions (H={}, S={}, A={}) do not match MDP (H={}, S={}, A={})",
        policy.horizon, policy.num_states, policy.num_actions, mdp.horizon, mdp.num_states,
        mdp.num_actions));
  }
}

Trajectory sample_trajectory(const TabularMDP& mdp, const StochasticPolicy& policy, Rng& rng) {
  check_dimensions(mdp, policy);
  Trajectory traj;
  traj.reserve(mdp.horizon);
  std::size_t s = rng.categorical(mdp.initial_dist);
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    std::size_t a = rng.categorical(policy.row(t, s));
    std::size_t sn = rng.categorical(mdp.row(s, a));
    traj.push_back({s, a, sn, mdp.r(s, a), t, t + 1 == mdp.horizon});
    s = sn;
  }
  return traj;
}

namespace {

void check_trajectory_bounds(const TabularMDP& mdp, const Trajectory& traj) {
  if (traj.size() > mdp.horizon) throw DimensionError("trajectory longer than horizon");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& tr = traj[i];
    if (tr.s >= mdp.num_states || tr.s_next >= mdp.num_states || tr.a >= mdp.num_actions) {
      throw DimensionError(fmt::format("transition {} index out of range", i));
    }
  }
}

}  // namespace

double dynamics_log_prob(const TabularMDP& mdp, const Trajectory& traj) {
  check_trajectory_bounds(mdp, traj);
  if (traj.empty()) return 0.0;
  double lp = log_or_neg_inf(mdp.initial_dist[traj.front().s]);
  for (const auto& tr : traj) lp += log_or_neg_inf(mdp.p(tr.s, tr.a, tr.s_next));
  return lp;
}

double trajectory_log_prob(const TabularMDP& mdp, const StochasticPolicy& policy,
                           const Trajectory& traj) {
  check_dimensions(mdp, policy);
  double lp = dynamics_log_prob(mdp, traj);
  for (const auto& tr : traj) lp += log_or_neg_inf(policy.prob(tr.t, tr.s, tr.a));
  return lp;
}

Occupancy occupancy_measure(const TabularMDP& mdp, const StochasticPolicy& policy) {
  check_dimensions(mdp, policy);
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  Occupancy occ(mdp.horizon * S * A, 0.0);
  std::vector<double> state_dist = mdp.initial_dist;
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    std::vector<double> next(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (state_dist[s] == 0.0) continue;
      for (std::size_t a = 0; a < A; ++a) {
        double w = state_dist[s] * policy.prob(t, s, a);
        occ[(t * S + s) * A + a] = w;
        if (w == 0.0) continue;
        auto row = mdp.row(s, a);
        for (std::size_t sn = 0; sn < S; ++sn) next[sn] += w * row[sn];
      }
    }
    state_dist = std::move(next);
  }
  return occ;
}

std::vector<double> final_state_distribution(const TabularMDP& mdp,
                                             const StochasticPolicy& policy) {
  Occupancy occ = occupancy_measure(mdp, policy);
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  const std::size_t t = mdp.horizon - 1;
  std::vector<double> out(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double w = occ[(t * S + s) * A + a];
      if (w == 0.0) continue;
      for (std::size_t sn = 0; sn < S; ++sn) out[sn] += w * mdp.p(s, a, sn);
    }
  }
  return out;
}

namespace {

struct Enumerator {
  const TabularMDP& mdp;
  const StochasticPolicy* policy;
  const TrajectoryVisitor* visit;
  Trajectory traj;
  std::size_t count = 0;

  void step(std::size_t t, std::size_t s, double lp) {
    if (t == mdp.horizon) {
      ++count;
      if (visit) (*visit)(traj, lp);
      return;
    }
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      double pa = policy ? policy->prob(t, s, a) : 1.0;
      if (!(pa > 0.0)) continue;
      for (std::size_t sn = 0; sn < mdp.num_states; ++sn) {
        double ps = mdp.p(s, a, sn);
        if (!(ps > 0.0)) continue;
        traj.push_back({s, a, sn, mdp.r(s, a), t, t + 1 == mdp.horizon});
        step(t + 1, sn, lp + std::log(pa) + std::log(ps));
        traj.pop_back();
      }
    }
  }

  void run() {
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
      if (mdp.initial_dist[s] > 0.0) step(0, s, std::log(mdp.initial_dist[s]));
    }
  }
};

}  // namespace

std::size_t count_trajectories(const TabularMDP& mdp, const StochasticPolicy* policy) {
  if (policy) check_dimensions(mdp, *policy);
  // Counts by forward recursion over per-state path counts, not by walking.
  const std::size_t S = mdp.num_states;
  std::vector<double> paths(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) paths[s] = mdp.initial_dist[s] > 0.0 ? 1.0 : 0.0;
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    std::vector<double> next(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (paths[s] == 0.0) continue;
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        if (policy && !(policy->prob(t, s, a) > 0.0)) continue;
        for (std::size_t sn = 0; sn < S; ++sn) {
          if (mdp.p(s, a, sn) > 0.0) next[sn] += paths[s];
        }
      }
    }
    paths = std::move(next);
  }
  double total = std::accumulate(paths.begin(), paths.end(), 0.0);
  return total >= 1.8e19 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(total);
}

void enumerate_trajectories(const TabularMDP& mdp, const StochasticPolicy* policy,
                            const TrajectoryVisitor& visit, std::size_t max_trajectories) {
  std::size_t n = count_trajectories(mdp, policy);
  if (n > max_trajectories) {
    throw std::length_error(fmt::format(
        "refusing to enumerate {} trajectories (limit {})", n, max_trajectories));
  }
  Enumerator e{mdp, policy, &visit, {}, 0};
  e.traj.reserve(mdp.horizon);
  e.run();
}

void write_mdp(std::ostream& out, const TabularMDP& mdp) {
  out << fmt::format("mdp v1 S={} A={} H={} gamma={:.17g}\n", mdp.num_states, mdp.num_actions,
                     mdp.horizon, mdp.discount);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      std::string line = fmt::format("{:.17g}", mdp.r(s, a));
      for (double v : mdp.row(s, a)) line += fmt::format(" {:.17g}", v);
      out << line << '\n';
    }
  }
  std::string init = "init";
  for (double v : mdp.initial_dist) init += fmt::format(" {:.17g}", v);
  out << init << '\n';
}

std::string write_mdp(const TabularMDP& mdp) {
  std::ostringstream out;
  write_mdp(out, mdp);
  return out.str();
}

namespace {

double parse_double(const std::string& tok, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size()) {
    throw std::invalid_argument(fmt::format("line {}: bad number '{}'", line_no, tok));
  }
  return v;
}

std::size_t parse_field(const std::string& tok, const std::string& key, std::size_t line_no) {
  if (tok.rfind(key + "=", 0) != 0) {
    throw std::invalid_argument(fmt::format("line {}: expected {}=<value>", line_no, key));
  }
  double v = parse_double(tok.substr(key.size() + 1), line_no);
  if (v < 1 || v != std::floor(v)) {
    throw std::invalid_argument(fmt::format("line {}: {} must be a positive integer", line_no, key));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

TabularMDP read_mdp(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::vector<std::string> {
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream ls(line);
      std::vector<std::string> toks;
      for (std::string tok; ls >> tok;) toks.push_back(tok);
      if (!toks.empty()) return toks;
    }
    throw std::invalid_argument(fmt::format("unexpected end of input after line {}", line_no));
  };

  auto header = next_line();
  if (header.size() != 6 || header[0] != "mdp" || header[1] != "v1") {
    throw std::invalid_argument(
        fmt::format("line {}: expected header 'mdp v1 S=<n> A=<m> H=<h> gamma=<g>'", line_no));
  }
  std::size_t S = parse_field(header[2], "S", line_no);
  std::size_t A = parse_field(header[3], "A", line_no);
  std::size_t H = parse_field(header[4], "H", line_no);
  if (header[5].rfind("gamma=", 0) != 0) {
    throw std::invalid_argument(fmt::format("line {}: expected gamma=<value>", line_no));
  }
  double gamma = parse_double(header[5].substr(6), line_no);

  TabularMDP mdp = TabularMDP::zeros(S, A, H, gamma);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      auto toks = next_line();
      if (toks.size() != S + 1) {
        throw std::invalid_argument(fmt::format(
            "line {}: expected reward and {} probabilities for (s={}, a={})", line_no, S, s, a));
      }
      mdp.r(s, a) = parse_double(toks[0], line_no);
      for (std::size_t sn = 0; sn < S; ++sn) mdp.p(s, a, sn) = parse_double(toks[sn + 1], line_no);
    }
  }
  auto init = next_line();
  if (init.size() != S + 1 || init[0] != "init") {
    throw std::invalid_argument(fmt::format("line {}: expected 'init' and {} values", line_no, S));
  }
  for (std::size_t s = 0; s < S; ++s) mdp.initial_dist[s] = parse_double(init[s + 1], line_no);
  return mdp;
}

TabularMDP read_mdp(const std::string& text) {
  std::istringstream in(text);
  return read_mdp(in);
}

}  // namespace darc
