#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "darc/darc_loop.hpp"
#include "darc/domains.hpp"
#include "darc/random_instances.hpp"

namespace darc {
namespace {

Transition tr(std::size_t s) { return {s, 0, s, 0.0, 0, false}; }

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer b(3);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_FALSE(b.add(tr(s)).has_value());
  auto ev = b.add(tr(3));
  ASSERT_TRUE(ev.has_value());
  EXPECT_EQ(ev->s, 0u);
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.inserted(), 4u);
  EXPECT_EQ(b[0].s, 1u);
  EXPECT_EQ(b[2].s, 3u);
  b.add(tr(4));
  std::vector<std::size_t> got;
  for (const auto& t : b.contents()) got.push_back(t.s);
  EXPECT_EQ(got, (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_THROW(b[3], std::out_of_range);
}

TEST(ReplayBuffer, UnboundedAndSampling) {
  ReplayBuffer b;
  Rng rng(1);
  EXPECT_THROW(b.sample(rng), std::logic_error);
  for (std::size_t s = 0; s < 4; ++s) b.add(tr(s));
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 40000; ++i) ++hits[b.sample(rng).s];
  for (int h : hits) EXPECT_NEAR(h / 40000.0, 0.25, 0.01);
}

TEST(ReplayBuffer, SamplingIsSeeded) {
  ReplayBuffer b(10);
  for (std::size_t s = 0; s < 10; ++s) b.add(tr(s));
  Rng r1(5), r2(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(b.sample(r1).s, b.sample(r2).s);
}

DarcConfig small_config() {
  DarcConfig cfg;
  cfg.num_iterations = 200;
  cfg.target_collect_period = 10;
  cfg.eval_every = 50;
  cfg.eval_episodes = 20;
  return cfg;
}

TEST(ValidateConfig, RejectsBadFields) {
  DarcConfig cfg;
  EXPECT_NO_THROW(validate_config(cfg));
  cfg.target_collect_period = 0;
  EXPECT_THROW(validate_config(cfg), std::invalid_argument);
  cfg = {};
  cfg.smoothing = 0.0;
  EXPECT_THROW(validate_config(cfg), std::invalid_argument);
  cfg = {};
  cfg.classifier = ClassifierKind::net;
  cfg.delta_r_mode = DeltaRMode::state_only;
  EXPECT_THROW(validate_config(cfg), std::invalid_argument);
}

TEST(RunDarc, TargetRolloutRatio) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  for (std::size_t r : {1u, 7u, 10u}) {
    cfg.target_collect_period = r;
    TrainResult res = run_darc(pair, cfg);
    EXPECT_EQ(res.stats.source_rollouts, 200u);
    EXPECT_EQ(res.stats.target_rollouts, 200u / r);
    EXPECT_EQ(res.stats.target_transitions_in_policy_updates, 0u);
    EXPECT_EQ(res.stats.records.size(), 200u);
  }
}

TEST(RunDarc, DeterministicPerSeed) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  cfg.seed = 42;
  TrainResult a = run_darc(pair, cfg);
  TrainResult b = run_darc(pair, cfg);
  EXPECT_EQ(a.q.q, b.q.q);
  std::ostringstream sa, sb;
  write_train_stats_csv(sa, a.stats);
  write_train_stats_csv(sb, b.stats);
  EXPECT_EQ(sa.str(), sb.str());
  cfg.seed = 43;
  TrainResult c = run_darc(pair, cfg);
  EXPECT_NE(a.q.q, c.q.q);
}

TEST(RunDarc, FullWarmupMatchesRlOnSource) {
  // Target data and classifier training draw from their own streams, so a
  // run whose correction never activates updates the policy exactly like RL
  // on the source.
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  cfg.warmup_iters = cfg.num_iterations;
  TrainResult darc = run_darc(pair, cfg);
  TrainResult src = run_rl_on_source(pair, cfg);
  EXPECT_EQ(darc.q.q, src.q.q);
  EXPECT_EQ(src.stats.target_rollouts, 0u);
  EXPECT_GT(darc.stats.target_rollouts, 0u);
}

TEST(RunDarc, IdenticalDomainsGiveSmallCorrection) {
  GridworldSpec spec;
  spec.wall_cells.clear();
  DomainPair pair = build_wall_gridworld(spec);
  DarcConfig cfg = small_config();
  cfg.num_iterations = 400;
  cfg.source_collection = Collection::uniform;
  cfg.target_collection = Collection::uniform;
  cfg.target_collect_period = 1;
  TrainResult res = run_darc(pair, cfg);
  double late = 0.0;
  for (std::size_t i = 300; i < 400; ++i) late += std::abs(res.stats.records[i].mean_delta_r);
  EXPECT_LT(late / 100.0, 0.1);
}

TEST(RunImportanceWeighting, ZeroCorrectionMatchesUnitWeights) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  cfg.warmup_iters = cfg.num_iterations;  // weights stay at 1
  TrainResult iw = run_importance_weighting(pair, cfg);
  TrainResult src = run_rl_on_source(pair, cfg);
  EXPECT_EQ(iw.q.q, src.q.q);
}

TEST(ImportanceWeight, Clamped) {
  EXPECT_DOUBLE_EQ(importance_weight(0.0, 20.0), 1.0);
  EXPECT_DOUBLE_EQ(importance_weight(kNegInf, 20.0), std::exp(-20.0));
  EXPECT_DOUBLE_EQ(importance_weight(50.0, 20.0), std::exp(20.0));
  EXPECT_DOUBLE_EQ(importance_weight(kNegInf, std::nullopt), 0.0);
}

TEST(RunRlOnTarget, UsesOnlyTargetData) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  cfg.target_update_multiplier = 3;
  TrainResult res = run_rl_on_target(pair, cfg);
  EXPECT_EQ(res.stats.source_rollouts, 0u);
  EXPECT_EQ(res.stats.target_rollouts, 200u);
  EXPECT_EQ(res.stats.policy_updates, 200u * 3 * cfg.rl_batch_size);
  EXPECT_EQ(res.stats.target_transitions_in_policy_updates, res.stats.policy_updates);

  cfg.finetune_source_iters = 50;
  TrainResult ft = run_rl_on_target(pair, cfg);
  EXPECT_EQ(ft.stats.source_rollouts, 50u);
  EXPECT_EQ(ft.stats.records.size(), 250u);
}

TEST(RunDarc, NetClassifierRuns) {
  DomainPair pair = build_wall_gridworld(GridworldSpec{});
  DarcConfig cfg = small_config();
  cfg.num_iterations = 30;
  cfg.classifier = ClassifierKind::net;
  cfg.net.batch_size = 32;
  cfg.net.hidden = {8};
  TrainResult res = run_darc(pair, cfg);
  EXPECT_FALSE(res.stats.diverged);
  EXPECT_EQ(res.delta_r.size(), pair.source.num_states * 5 * pair.source.num_states);
  for (double v : res.delta_r) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(std::abs(v), 20.0);
  }
}

TEST(EvaluatePolicy, MatchesExactAbsorption) {
  GridworldSpec spec;
  DomainPair pair = build_wall_gridworld(spec);
  StochasticPolicy pi = StochasticPolicy::uniform_for(pair.target);
  std::vector<std::size_t> goal{goal_state(spec)};
  const double exact = exact_success_probability(pair.target, pi, goal);
  Rng rng(11);
  EvalResult r = evaluate_policy(pair.target, pi, 20000, rng, goal);
  EXPECT_LE(r.success_ci_low, exact);
  EXPECT_GE(r.success_ci_high, exact);
  EXPECT_GT(exact, 0.0);
}

TEST(EvaluatePolicy, ExactSuccessOnTinyChain) {
  // Two states, the only action moves 0 -> 1 with prob 0.5 per step.
  TabularMDP m = TabularMDP::zeros(2, 1, 3);
  m.transition = {0.5, 0.5, 0.0, 1.0};
  m.initial_dist = {1.0, 0.0};
  StochasticPolicy pi = StochasticPolicy::uniform_for(m);
  std::vector<std::size_t> goal{1};
  EXPECT_DOUBLE_EQ(exact_success_probability(m, pi, goal), 1.0 - 0.125);
}

TEST(EvaluateArchery, SuccessCountsNearCenter) {
  ArcherySpec spec;
  Rng rng(3);
  EvalResult r = evaluate_archery(0.0, Domain::source, spec, 2000, rng, 1e9);
  EXPECT_DOUBLE_EQ(r.success_rate, 1.0);
  EXPECT_EQ(r.episodes, 2000u);
}

TEST(WriteTrainStatsCsv, Header) {
  TrainStats st;
  st.records.push_back({1, 0.5, 0.1, 0.2, 3.0, 4.0, 0.25, 0.0});
  std::ostringstream out;
  write_train_stats_csv(out, st);
  EXPECT_EQ(out.str(),
            "iter,mean_delta_r,loss_sas,loss_sa,source_return,target_return,target_success,"
            "wall_clock_ms\n1,0.5,0.10000000000000001,0.20000000000000001,3,4,0.25,0\n");
}

}  // namespace
}  // namespace darc
