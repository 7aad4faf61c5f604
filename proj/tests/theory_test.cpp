#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "darc/domains.hpp"
#include "darc/maxent.hpp"
#include "darc/random_instances.hpp"
#include "darc/theory.hpp"

namespace darc {
namespace {

// One start state with a single action that moves to state 0 or 1.
TabularMDP two_point(double p0) {
  TabularMDP m = TabularMDP::zeros(2, 1, 1);
  m.p(0, 0, 0) = p0;
  m.p(0, 0, 1) = 1.0 - p0;
  m.p(1, 0, 1) = 1.0;
  m.initial_dist = {1.0, 0.0};
  return m;
}

DomainPair random_pair(Rng& rng, std::size_t S = 3, double zero_prob = 0.0) {
  RandomInstanceOptions o;
  o.num_states = S;
  o.num_actions = 2;
  o.horizon = 3;
  o.mask_zero_prob = zero_prob;
  return random_domain_pair(o, rng);
}

TEST(TrajectoryKl, IdenticalDomainsGiveZero) {
  Rng rng(1);
  DomainPair p = random_pair(rng);
  DomainPair same = make_domain_pair(p.source, p.source);
  StochasticPolicy pi = random_policy(same.source, rng);
  TrajectoryKl kl = trajectory_kl(same, pi);
  EXPECT_EQ(kl.enumeration, 0.0);
  EXPECT_EQ(kl.occupancy, 0.0);
}

TEST(TrajectoryKl, TwoPointClosedForm) {
  DomainPair pair = make_domain_pair(two_point(0.9), two_point(0.5));
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.source);
  TrajectoryKl kl = trajectory_kl(pair, pi);
  const double expected = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  EXPECT_NEAR(kl.enumeration, expected, 1e-12);
  EXPECT_NEAR(kl.occupancy, expected, 1e-12);
}

TEST(TrajectoryKl, PathsAgreeOnRandomInstances) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    DomainPair pair = random_pair(rng);
    StochasticPolicy pi = random_policy(pair.source, rng);
    TrajectoryKl kl = trajectory_kl(pair, pi);
    EXPECT_TRUE(kl.agree(1e-9)) << kl.enumeration << " vs " << kl.occupancy;
    EXPECT_EQ(kl.occupancy, epsilon_of_policy(pair, pi));
  }
}

TEST(TrajectoryKl, ForbiddenOutcomeIsInfiniteBothWays) {
  DomainPair pair = make_domain_pair(two_point(0.5), two_point(1.0));
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.source);
  TrajectoryKl kl = trajectory_kl(pair, pi);
  EXPECT_EQ(kl.enumeration, kPosInf);
  EXPECT_EQ(kl.occupancy, kPosInf);
  EXPECT_TRUE(kl.agree());
}

TEST(TrajectoryKl, RefusesHugeEnumeration) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.source);
  EXPECT_THROW(trajectory_kl(pair, pi), std::length_error);
}

TEST(EpsilonOfPolicy, DetourAvoidingDifferencesIsZero) {
  // Without slips the only differing rows are moves into the wall; a policy
  // that goes around never attempts one.
  GridworldSpec spec;
  spec.slip_prob = 0.0;
  DomainPair pair = build_wall_gridworld(spec);
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.source);
  std::fill(pi.probs.begin(), pi.probs.end(), 0.0);
  for (std::size_t t = 0; t < spec.horizon; ++t)
    for (std::size_t s = 0; s < pair.source.num_states; ++s) {
      auto c = state_cell(spec, s);
      std::size_t a = kStay;
      if (c) {
        if (c->x == spec.width - 1 && c->y < spec.height - 1) a = kDown;
        else if (c->y == 0) a = kRight;
        else if (c->y == spec.height - 1) a = kLeft;
      }
      pi.prob(t, s, a) = 1.0;
    }
  EXPECT_EQ(epsilon_of_policy(pair, pi), 0.0);
  // Walking straight down does hit the wall.
  StochasticPolicy down = pi;
  std::fill(down.probs.begin(), down.probs.end(), 0.0);
  for (std::size_t t = 0; t < spec.horizon; ++t)
    for (std::size_t s = 0; s < pair.source.num_states; ++s) down.prob(t, s, kDown) = 1.0;
  EXPECT_EQ(epsilon_of_policy(pair, down), kPosInf);
}

TEST(RMax, ClosedForm) {
  TabularMDP m = TabularMDP::zeros(1, 2, 2);
  m.reward = {1.0, 1.0};
  m.p(0, 0, 0) = 1.0;
  m.p(0, 1, 0) = 1.0;
  m.initial_dist = {1.0};
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  EXPECT_NEAR(r_max({&m}, {&pi}), 2.0 * (1.0 + std::log(2.0)), 1e-12);
  // Negative returns count by magnitude.
  m.reward = {-5.0, -5.0};
  EXPECT_NEAR(r_max({&m}, {&pi}), 2.0 * (5.0 - std::log(2.0)), 1e-12);
}

TEST(PinskerGap, IdenticalDomainsAreTight) {
  Rng rng(3);
  DomainPair p = random_pair(rng);
  DomainPair same = make_domain_pair(p.source, p.source);
  TheoryCheck c = check_pinsker_gap(same, random_policy(same.source, rng));
  EXPECT_TRUE(c.pass);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.rhs, 0.0);
}

TEST(PinskerGap, HoldsOnRandomInstances) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    DomainPair pair = random_pair(rng, 3, i % 2 ? 0.2 : 0.0);
    TheoryCheck c = check_pinsker_gap(pair, random_policy(pair.source, rng));
    EXPECT_TRUE(c.pass) << c.lhs << " > " << c.rhs;
    EXPECT_FALSE(c.skipped);
  }
}

TEST(PinskerGap, WallCrossingPolicyHasPositiveSlack) {
  GridworldSpec spec;
  DomainPair pair = build_wall_gridworld(spec);
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.source);
  for (std::size_t t = 0; t < spec.horizon; ++t)
    for (std::size_t s = 0; s < pair.source.num_states; ++s)
      for (std::size_t a = 0; a < kNumGridActions; ++a) pi.prob(t, s, a) = a == kDown ? 0.96 : 0.01;
  TheoryCheck c = check_pinsker_gap(pair, pi);
  EXPECT_TRUE(c.pass);
  EXPECT_GT(c.slack, 0.0);
}

TEST(Theorem, IdenticalDomainsHaveZeroSlack) {
  Rng rng(5);
  DomainPair p = random_pair(rng);
  DomainPair same = make_domain_pair(p.source, p.source);
  TheoryCheck c = check_theorem(same);
  EXPECT_TRUE(c.pass);
  EXPECT_EQ(c.epsilon, 0.0);
  EXPECT_NEAR(c.slack, 0.0, 1e-12);
}

TEST(Theorem, HoldsOnWallGridworld) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  TheoryCheck c = check_theorem(pair);
  EXPECT_TRUE(c.pass);
  EXPECT_TRUE(std::isfinite(c.lhs));
}

TEST(Theorem, HoldsOnRandomInstances) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    DomainPair pair = random_pair(rng, 2 + i % 3);
    TheoryCheck c = check_theorem(pair);
    EXPECT_TRUE(c.pass) << c.lhs << " < " << c.rhs;
    EXPECT_TRUE(std::isfinite(c.epsilon));
    EXPECT_TRUE(check_theorem_premise(pair).pass);
  }
}

TEST(Jensen, DeterministicIsTight) {
  TabularMDP m = TabularMDP::zeros(2, 1, 2);
  m.p(0, 0, 1) = 1.0;
  m.p(1, 0, 1) = 1.0;
  m.reward = {0.5, 2.0};
  m.initial_dist = {1.0, 0.0};
  DomainPair pair = make_domain_pair(m, m);
  TheoryCheck c = check_jensen_bound(pair, StochasticPolicy::uniform_for(m));
  EXPECT_TRUE(c.pass);
  EXPECT_NEAR(c.lhs, 2.5, 1e-12);
  EXPECT_NEAR(c.slack, 0.0, 1e-12);
}

TEST(Jensen, BernoulliGapClosedForm) {
  DomainPair pair = make_domain_pair(two_point(0.5), two_point(0.9));
  TheoryCheck c = check_jensen_bound(pair, StochasticPolicy::uniform_for(pair.source));
  EXPECT_TRUE(c.pass);
  // dr takes log 1.8 and log 0.2 with probability 1/2 each.
  const double mean = 0.5 * std::log(1.8) + 0.5 * std::log(0.2);
  const double log_mean_exp = std::log(0.5 * 1.8 + 0.5 * 0.2);
  EXPECT_NEAR(c.lhs, log_mean_exp, 1e-12);
  EXPECT_NEAR(c.rhs, mean, 1e-12);
  EXPECT_GT(c.slack, 0.0);
}

TEST(Jensen, HoldsOnRandomInstances) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    DomainPair pair = random_pair(rng, 3, i % 2 ? 0.2 : 0.0);
    TheoryCheck c = check_jensen_bound(pair, random_policy(pair.source, rng));
    EXPECT_TRUE(c.pass) << c.note;
  }
}

TEST(MiIdentity, IdenticalDomainsGiveZero) {
  Rng rng(8);
  DomainPair p = random_pair(rng);
  DomainPair same = make_domain_pair(p.source, p.source);
  TheoryCheck c = check_mi_identity(same, StochasticPolicy::uniform_for(same.source));
  EXPECT_TRUE(c.pass);
  EXPECT_NEAR(c.lhs, 0.0, 1e-15);
  EXPECT_NEAR(c.rhs, 0.0, 1e-15);
}

TEST(MiIdentity, TwoPointClosedForm) {
  DomainPair pair = make_domain_pair(two_point(0.5), two_point(0.9));
  TheoryCheck c = check_mi_identity(pair, StochasticPolicy::uniform_for(pair.source));
  const double lhs = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  const double info_t = 0.9 * std::log((0.9 / 1.4) / 0.5) + 0.1 * std::log((0.1 / 0.6) / 0.5);
  const double info_s = 0.9 * std::log((0.5 / 1.4) / 0.5) + 0.1 * std::log((0.5 / 0.6) / 0.5);
  EXPECT_NEAR(c.lhs, lhs, 1e-12);
  EXPECT_NEAR(c.rhs, info_t - info_s, 1e-12);
  EXPECT_TRUE(c.pass);
}

TEST(MiIdentity, WallGridworldUniform) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  TheoryCheck c = check_mi_identity(pair, StochasticPolicy::uniform_for(pair.source));
  EXPECT_TRUE(c.pass);
  EXPECT_GT(c.lhs, 0.0);
}

TEST(TheorySuite, AllPassAndReportFormats) {
  TheorySuiteOptions o;
  o.instances = 20;
  o.seed = 9;
  TheoryReport r = run_theory_suite(o);
  EXPECT_EQ(r.checks.size(), 100u);
  EXPECT_EQ(r.failures(), 0u);
  std::ostringstream csv, sum;
  write_theory_csv(csv, r);
  write_theory_summary(sum, r);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "name,lhs,rhs,slack,pass,skipped,epsilon,r_max,instance,note");
  EXPECT_NE(sum.str().find("100 checks, 0 failed, 0 skipped"), std::string::npos);
  TheoryReport again = run_theory_suite(o);
  std::ostringstream csv2;
  write_theory_csv(csv2, again);
  EXPECT_EQ(csv.str(), csv2.str());
}

TEST(TheoryReport, CountsFailures) {
  TheoryReport r;
  r.checks.push_back({});
  r.checks.back().pass = true;
  r.checks.push_back({});
  EXPECT_EQ(r.failures(), 1u);
  EXPECT_FALSE(r.all_passed());
}

}  // namespace
}  // namespace darc
