#pragma once

#include "darc/mdp.hpp"
#include "darc/rng.hpp"

namespace darc {

struct RandomInstanceOptions {
  std::size_t num_states = 3;
  std::size_t num_actions = 2;
  std::size_t horizon = 3;
  // Chance that a transition entry is forced to zero (at least one entry per
  // row always survives).
  double sparsity = 0.0;
  double reward_lo = 0.0;
  double reward_hi = 1.0;
  // Range of the positive multiplicative mask that turns source rows into
  // target rows.
  double mask_lo = 0.1;
  double mask_hi = 1.0;
  // Chance that a mask entry is zero, removing that outcome from the target.
  // Zero keeps both supports equal.
  double mask_zero_prob = 0.0;
};

TabularMDP random_mdp(const RandomInstanceOptions& opts, Rng& rng);

// Target rows are normalized (source row * mask) with a positive mask, so the
// target support is always inside the source support.
DomainPair random_domain_pair(const RandomInstanceOptions& opts, Rng& rng);

StochasticPolicy random_policy(const TabularMDP& mdp, Rng& rng, double zero_prob = 0.0);

}  // namespace darc
