#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "darc/mdp.hpp"
#include "darc/random_instances.hpp"

namespace darc {
namespace {

TabularMDP two_state_chain() {
  TabularMDP m = TabularMDP::zeros(2, 2, 2);
  m.p(0, 0, 1) = 1.0;
  m.p(0, 1, 0) = 1.0;
  m.p(1, 0, 0) = 1.0;
  m.p(1, 1, 1) = 1.0;
  m.r(0, 0) = 1.0;
  m.initial_dist = {1.0, 0.0};
  return m;
}

TabularMDP self_loop(std::size_t horizon) {
  TabularMDP m = TabularMDP::zeros(1, 2, horizon);
  m.p(0, 0, 0) = 1.0;
  m.p(0, 1, 0) = 1.0;
  m.initial_dist = {1.0};
  return m;
}

// Every (s_0, a_0, s_1, ..., s_H) tuple by odometer, independent of
// enumerate_trajectories.
std::vector<Trajectory> all_tuples(const TabularMDP& m) {
  const std::size_t H = m.horizon;
  std::vector<std::size_t> digits(2 * H + 1, 0);
  std::vector<std::size_t> radix(2 * H + 1, m.num_states);
  for (std::size_t t = 0; t < H; ++t) radix[2 * t + 1] = m.num_actions;
  std::vector<Trajectory> out;
  while (true) {
    Trajectory tr;
    for (std::size_t t = 0; t < H; ++t) {
      tr.push_back({digits[2 * t], digits[2 * t + 1], digits[2 * t + 2], 0.0, t, t + 1 == H});
    }
    out.push_back(tr);
    std::size_t i = 0;
    while (i < digits.size() && ++digits[i] == radix[i]) digits[i++] = 0;
    if (i == digits.size()) break;
  }
  return out;
}

TEST(ValidateMdp, ValidChainHasEmptyReport) {
  EXPECT_TRUE(validate_mdp(two_state_chain()).empty());
}

TEST(ValidateMdp, ReportsRowDeficit) {
  TabularMDP m = two_state_chain();
  m.p(0, 0, 1) = 0.9;
  auto report = validate_mdp(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].s, 0u);
  EXPECT_EQ(report[0].a, 0u);
  EXPECT_NEAR(report[0].magnitude, 0.1, 1e-12);
}

TEST(ValidateMdp, ReportsNegativeEntry) {
  TabularMDP m = two_state_chain();
  m.p(1, 1, 1) = 1.05;
  m.p(1, 1, 0) = -0.05;
  auto report = validate_mdp(m);
  ASSERT_EQ(report.size(), 2u);  // the negative entry and the entry above 1
  EXPECT_EQ(report[0].s, 1u);
  EXPECT_EQ(report[0].a, 1u);
  EXPECT_EQ(report[0].s_next, 0u);
  EXPECT_DOUBLE_EQ(report[0].magnitude, -0.05);
}

TEST(ValidateMdp, ReportsInitialAndReward) {
  TabularMDP m = two_state_chain();
  m.initial_dist = {0.5, 0.2};
  m.r(1, 0) = std::nan("");
  EXPECT_EQ(validate_mdp(m).size(), 2u);
}

TEST(CheckSupport, IdenticalDomains) {
  DomainPair pair = make_domain_pair(two_state_chain(), two_state_chain());
  auto res = check_support(pair);
  EXPECT_TRUE(res.ok);
  EXPECT_TRUE(res.violations.empty());
  EXPECT_TRUE(pair.support_ok);
}

TEST(CheckSupport, TargetOnlyTransition) {
  TabularMDP src = two_state_chain();
  TabularMDP tgt = src;
  tgt.p(0, 0, 1) = 0.9;
  tgt.p(0, 0, 0) = 0.1;
  DomainPair pair = make_domain_pair(src, tgt);
  auto res = check_support(pair);
  EXPECT_FALSE(res.ok);
  ASSERT_EQ(res.violations.size(), 1u);
  EXPECT_EQ(res.violations[0], (SupportTriple{0, 0, 0}));
  EXPECT_FALSE(pair.support_ok);
}

TEST(DomainPair, RejectsRewardMismatch) {
  TabularMDP src = two_state_chain();
  TabularMDP tgt = src;
  tgt.r(1, 1) = 3.0;
  EXPECT_THROW(make_domain_pair(src, tgt), std::invalid_argument);
}

TEST(SampleTrajectory, SelfLoop) {
  TabularMDP m = self_loop(3);
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  Rng rng(7);
  Trajectory tr = sample_trajectory(m, pi, rng);
  ASSERT_EQ(tr.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(tr[t].s, 0u);
    EXPECT_EQ(tr[t].s_next, 0u);
    EXPECT_EQ(tr[t].t, t);
  }
  EXPECT_TRUE(tr.back().done);
}

TEST(SampleTrajectory, DeterministicPerSeed) {
  Rng gen(3);
  TabularMDP m = random_mdp({.num_states = 4, .num_actions = 3, .horizon = 6}, gen);
  StochasticPolicy pi = random_policy(m, gen);
  Rng a(11), b(11);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_trajectory(m, pi, a), sample_trajectory(m, pi, b));
}

TEST(SampleTrajectory, RejectsDimensionMismatch) {
  TabularMDP m = two_state_chain();
  StochasticPolicy pi = StochasticPolicy::uniform(2, 3, 2);
  Rng rng(1);
  EXPECT_THROW(sample_trajectory(m, pi, rng), DimensionError);
}

TEST(SampleTrajectory, ChainsConsecutively) {
  Rng gen(5);
  TabularMDP m = random_mdp({.num_states = 5, .num_actions = 2, .horizon = 8}, gen);
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    Trajectory tr = sample_trajectory(m, pi, rng);
    for (std::size_t t = 0; t + 1 < tr.size(); ++t) EXPECT_EQ(tr[t].s_next, tr[t + 1].s);
  }
}

// Chi-square goodness of fit of sampled trajectories against exp(log-prob).
TEST(SampleTrajectory, MatchesExactTrajectoryDistribution) {
  Rng gen(19);
  TabularMDP m = random_mdp({.num_states = 2, .num_actions = 2, .horizon = 2}, gen);
  StochasticPolicy pi = random_policy(m, gen);
  std::map<std::vector<std::size_t>, double> expected;
  enumerate_trajectories(m, &pi, [&](const Trajectory& tr, double lp) {
    std::vector<std::size_t> key;
    for (const auto& x : tr) key.insert(key.end(), {x.s, x.a, x.s_next});
    expected[key] = std::exp(lp);
  });
  ASSERT_LE(expected.size(), 50u);
  const int n = 10000;
  std::map<std::vector<std::size_t>, int> seen;
  Rng rng(23);
  for (int i = 0; i < n; ++i) {
    std::vector<std::size_t> key;
    for (const auto& x : sample_trajectory(m, pi, rng)) key.insert(key.end(), {x.s, x.a, x.s_next});
    ++seen[key];
  }
  double chi2 = 0.0;
  for (const auto& [key, p] : expected) {
    double e = n * p;
    double o = seen.count(key) ? seen[key] : 0;
    chi2 += (o - e) * (o - e) / e;
  }
  const double df = static_cast<double>(expected.size() - 1);
  EXPECT_LT(chi2, df + 5.0 * std::sqrt(2.0 * df));
}

TEST(TrajectoryLogProb, DeterministicChainIsZero) {
  TabularMDP m = two_state_chain();
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  for (std::size_t t = 0; t < 2; ++t) {
    pi.prob(t, 0, 0) = 1.0, pi.prob(t, 0, 1) = 0.0;
    pi.prob(t, 1, 0) = 1.0, pi.prob(t, 1, 1) = 0.0;
  }
  Trajectory tr = {{0, 0, 1, 1.0, 0, false}, {1, 0, 0, 0.0, 1, true}};
  EXPECT_DOUBLE_EQ(trajectory_log_prob(m, pi, tr), 0.0);
}

TEST(TrajectoryLogProb, ZeroProbabilityTransitionIsNegInf) {
  TabularMDP m = two_state_chain();
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  Trajectory tr = {{0, 0, 0, 1.0, 0, false}, {0, 1, 0, 0.0, 1, true}};
  EXPECT_EQ(trajectory_log_prob(m, pi, tr), kNegInf);
}

TEST(TrajectoryLogProb, SumsToOneOverAllTuples) {
  Rng gen(29);
  for (int rep = 0; rep < 5; ++rep) {
    TabularMDP m = random_mdp({.num_states = 3, .num_actions = 2, .horizon = 2, .sparsity = 0.3},
                              gen);
    StochasticPolicy pi = random_policy(m, gen, 0.2);
    double total = 0.0;
    for (const auto& tr : all_tuples(m)) total += std::exp(trajectory_log_prob(m, pi, tr));
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(EnumerateTrajectories, AgreesWithBruteForce) {
  Rng gen(31);
  TabularMDP m = random_mdp({.num_states = 3, .num_actions = 2, .horizon = 3, .sparsity = 0.4},
                            gen);
  StochasticPolicy pi = random_policy(m, gen, 0.3);
  std::size_t positive = 0;
  for (const auto& tr : all_tuples(m)) positive += trajectory_log_prob(m, pi, tr) > kNegInf;
  std::size_t visited = 0;
  double total = 0.0;
  enumerate_trajectories(m, &pi, [&](const Trajectory& tr, double lp) {
    ++visited;
    total += std::exp(lp);
    EXPECT_NEAR(lp, trajectory_log_prob(m, pi, tr), 1e-12);
  });
  EXPECT_EQ(visited, positive);
  EXPECT_EQ(count_trajectories(m, &pi), positive);
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(EnumerateTrajectories, RefusesAboveLimit) {
  Rng gen(1);
  TabularMDP m = random_mdp({.num_states = 4, .num_actions = 3, .horizon = 6}, gen);
  EXPECT_THROW(enumerate_trajectories(m, nullptr, [](const Trajectory&, double) {}, 100000),
               std::length_error);
}

TEST(OccupancyMeasure, FirstSliceIsInitialTimesPolicy) {
  Rng gen(37);
  TabularMDP m = random_mdp({.num_states = 4, .num_actions = 3, .horizon = 5}, gen);
  StochasticPolicy pi = random_policy(m, gen);
  Occupancy occ = occupancy_measure(m, pi);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_DOUBLE_EQ(occupancy_at(occ, m, 0, s, a), m.initial_dist[s] * pi.prob(0, s, a));
    }
  }
  for (std::size_t t = 0; t < 5; ++t) {
    double total = 0.0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t a = 0; a < 3; ++a) total += occupancy_at(occ, m, t, s, a);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(OccupancyMeasure, SingleStateEqualsPolicy) {
  TabularMDP m = self_loop(4);
  Rng gen(41);
  StochasticPolicy pi = random_policy(m, gen);
  Occupancy occ = occupancy_measure(m, pi);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_DOUBLE_EQ(occupancy_at(occ, m, t, 0, a), pi.prob(t, 0, a));
}

TEST(OccupancyMeasure, ExpectedRewardMatchesMonteCarlo) {
  Rng gen(43);
  TabularMDP m = random_mdp({.num_states = 3, .num_actions = 2, .horizon = 4}, gen);
  StochasticPolicy pi = random_policy(m, gen);
  Occupancy occ = occupancy_measure(m, pi);
  double exact = 0.0;
  for (std::size_t t = 0; t < m.horizon; ++t)
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t a = 0; a < 2; ++a) exact += occupancy_at(occ, m, t, s, a) * m.r(s, a);

  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  Rng rng(47);
  for (int i = 0; i < n; ++i) {
    double ret = 0.0;
    for (const auto& tr : sample_trajectory(m, pi, rng)) ret += tr.r;
    sum += ret;
    sum_sq += ret * ret;
  }
  double mean = sum / n;
  double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - exact), 3.0 * se);
}

TEST(MdpText, RoundTripIsBitExact) {
  Rng gen(53);
  TabularMDP m = random_mdp({.num_states = 4, .num_actions = 3, .horizon = 7, .sparsity = 0.3,
                             .reward_lo = -2.0, .reward_hi = 3.0},
                            gen);
  m.discount = 0.99;
  std::string text = write_mdp(m);
  TabularMDP back = read_mdp(text);
  EXPECT_EQ(back.transition, m.transition);
  EXPECT_EQ(back.reward, m.reward);
  EXPECT_EQ(back.initial_dist, m.initial_dist);
  EXPECT_EQ(back.horizon, m.horizon);
  EXPECT_EQ(back.discount, m.discount);
  EXPECT_EQ(write_mdp(back), text);
  EXPECT_EQ(text.substr(0, text.find('\n')), "mdp v1 S=4 A=3 H=7 gamma=0.98999999999999999");
}

TEST(MdpText, RejectsMalformed) {
  EXPECT_THROW(read_mdp("mdp v2 S=1 A=1 H=1 gamma=1\n0 1\ninit 1\n"), std::invalid_argument);
  EXPECT_THROW(read_mdp("mdp v1 S=1 A=1 H=1 gamma=1\n0 1 0\ninit 1\n"), std::invalid_argument);
  EXPECT_THROW(read_mdp("mdp v1 S=1 A=1 H=1 gamma=1\n0 x\ninit 1\n"), std::invalid_argument);
  EXPECT_THROW(read_mdp("mdp v1 S=1 A=1 H=1 gamma=1\n0 1\n"), std::invalid_argument);
  EXPECT_NO_THROW(read_mdp("mdp v1 S=1 A=1 H=1 gamma=1\n0 1\ninit 1\n"));
}

}  // namespace
}  // namespace darc
