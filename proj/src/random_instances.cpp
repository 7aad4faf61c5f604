#include "darc/random_instances.hpp"

#include <numeric>

namespace darc {

namespace {

void normalize(std::span<double> row) {
  double total = std::accumulate(row.begin(), row.end(), 0.0);
  for (double& v : row) v /= total;
}

}  // namespace

TabularMDP random_mdp(const RandomInstanceOptions& opts, Rng& rng) {
  TabularMDP m = TabularMDP::zeros(opts.num_states, opts.num_actions, opts.horizon);
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      auto row = m.row(s, a);
      std::size_t keep = rng.uniform_index(m.num_states);
      for (std::size_t sn = 0; sn < m.num_states; ++sn) {
        bool zero = sn != keep && rng.uniform() < opts.sparsity;
        row[sn] = zero ? 0.0 : rng.uniform(0.05, 1.0);
      }
      normalize(row);
      m.r(s, a) = rng.uniform(opts.reward_lo, opts.reward_hi);
    }
  }
  for (double& v : m.initial_dist) v = rng.uniform(0.05, 1.0);
  normalize(m.initial_dist);
  return m;
}

DomainPair random_domain_pair(const RandomInstanceOptions& opts, Rng& rng) {
  TabularMDP source = random_mdp(opts, rng);
  TabularMDP target = source;
  for (std::size_t s = 0; s < source.num_states; ++s) {
    for (std::size_t a = 0; a < source.num_actions; ++a) {
      auto src = source.row(s, a);
      auto row = target.row(s, a);
      // Keep one supported outcome so the masked row still normalizes.
      std::size_t keep = 0;
      while (!(src[keep] > 0.0)) ++keep;
      for (std::size_t sn = 0; sn < source.num_states; ++sn) {
        bool zero = sn != keep && rng.uniform() < opts.mask_zero_prob;
        row[sn] = zero ? 0.0 : src[sn] * rng.uniform(opts.mask_lo, opts.mask_hi);
      }
      normalize(row);
    }
  }
  return make_domain_pair(std::move(source), std::move(target));
}

StochasticPolicy random_policy(const TabularMDP& mdp, Rng& rng, double zero_prob) {
  StochasticPolicy p = StochasticPolicy::uniform_for(mdp);
  for (std::size_t t = 0; t < p.horizon; ++t) {
    for (std::size_t s = 0; s < p.num_states; ++s) {
      auto row = p.row(t, s);
      std::size_t keep = rng.uniform_index(p.num_actions);
      for (std::size_t a = 0; a < p.num_actions; ++a) {
        bool zero = a != keep && rng.uniform() < zero_prob;
        row[a] = zero ? 0.0 : rng.uniform(0.05, 1.0);
      }
      normalize(row);
    }
  }
  return p;
}

}  // namespace darc
