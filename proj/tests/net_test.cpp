#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "darc/domains.hpp"
#include "darc/net.hpp"

namespace darc {
namespace {

ClassifierBatch random_batch(std::size_t sa_dim, std::size_t sas_dim, std::size_t n, Rng& rng) {
  ClassifierBatch b;
  b.sa.resize(static_cast<Eigen::Index>(sa_dim), static_cast<Eigen::Index>(n));
  b.sas.resize(static_cast<Eigen::Index>(sas_dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.sa.size(); ++i) b.sa.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.sas.size(); ++i) b.sas.data()[i] = rng.normal();
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.uniform_index(2)));
  return b;
}

TEST(Mlp, ShapesAndParameterCount) {
  Rng rng(1);
  Mlp m({3, 4, 2}, rng);
  EXPECT_EQ(m.num_params(), 4u * 3 + 4 + 2 * 4 + 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 5);
  Eigen::MatrixXd y = m.forward(x);
  EXPECT_EQ(y.rows(), 2);
  EXPECT_EQ(y.cols(), 5);
  EXPECT_THROW(m.forward(Eigen::MatrixXd::Ones(2, 1)), DimensionError);
}

TEST(Mlp, LinearNetworkByHand) {
  // 2 -> 2 identity-ish layer, no hidden units.
  Mlp m = Mlp::from_params({2, 2}, {1.0, 2.0, 3.0, 4.0, 0.5, -0.5});
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 1.0;
  Eigen::MatrixXd y = m.forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0 + 3.0 + 0.5);
  EXPECT_DOUBLE_EQ(y(1, 0), 2.0 + 4.0 - 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState adam;
  adam.learning_rate = 0.1;
  std::vector<double> p{1.0, -1.0};
  adam.apply(p, {2.0, -0.5});
  EXPECT_NEAR(p[0], 0.9, 1e-7);
  EXPECT_NEAR(p[1], -0.9, 1e-7);
  EXPECT_EQ(adam.step, 1u);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  Eigen::MatrixXd x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  Standardizer st = Standardizer::fit(x);
  Eigen::MatrixXd z = st.apply(x);
  EXPECT_NEAR(z.row(0).mean(), 0.0, 1e-12);
  EXPECT_NEAR(z.row(0).squaredNorm() / 4.0, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(st.scale[1], 1.0);
}

TEST(OneHotFeatures, Layout) {
  std::vector<Transition> t{{1, 0, 2, 0, 0, false}};
  ClassifierData d = one_hot_features(t, 3, 2);
  Eigen::VectorXd sa(5), sas(8);
  sa << 0, 1, 0, 1, 0;
  sas << 0, 1, 0, 1, 0, 0, 0, 1;
  EXPECT_EQ(d.sa.col(0), sa);
  EXPECT_EQ(d.sas.col(0), sas);
}

TEST(NetClassifierPair, FourTermFormReducesToSasLogit) {
  Rng rng(2);
  NetClassifierPair pair = init_net_pair(3, 5, {8, 8}, 1.0, rng);
  ClassifierBatch b = random_batch(3, 5, 20, rng);
  Eigen::VectorXd dr = pair.delta_r(b.sa, b.sas);
  Eigen::MatrixXd f = pair.f_sas.forward(b.sas);
  for (Eigen::Index i = 0; i < 20; ++i) EXPECT_NEAR(dr[i], f(1, i) - f(0, i), 1e-12);
  // Probability route gives the same numbers.
  Eigen::VectorXd pt = pair.p_target_sas(b.sa, b.sas);
  Eigen::VectorXd qt = pair.p_target_sa(b.sa);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const double four = std::log(pt[i]) - std::log(qt[i]) - std::log(1 - pt[i]) + std::log(1 - qt[i]);
    EXPECT_NEAR(dr[i], four, 1e-9);
  }
}

TEST(NetClassifierPair, UntrainedThrows) {
  NetClassifierPair pair;
  EXPECT_THROW(pair.delta_r(Eigen::MatrixXd(1, 1), Eigen::MatrixXd(2, 1)), std::logic_error);
}

TEST(NetClassifierPair, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  for (int point = 0; point < 20; ++point) {
    NetClassifierPair pair = init_net_pair(4, 7, {16, 16}, 1.0, rng);
    ClassifierBatch b = random_batch(4, 7, 32, rng);
    GradientCheck g = check_gradients(pair, b, 100, rng);
    EXPECT_EQ(g.checked, 100u);
    EXPECT_LT(g.max_rel_error, 1e-4);
  }
}

TEST(NetClassifierPair, CheckpointRoundTripIsExact) {
  Rng rng(4);
  NetClassifierPair pair = init_net_pair(2, 3, {5}, 0.7, rng);
  pair.sas_norm.mean << 0.1, -2.0, 3.0;
  pair.sas_norm.scale << 1.0 / 3.0, 2.0, 7.0;
  std::stringstream ss;
  write_net_pair(ss, pair);
  NetClassifierPair back = read_net_pair(ss);
  EXPECT_EQ(back.f_sa.params(), pair.f_sa.params());
  EXPECT_EQ(back.f_sas.params(), pair.f_sas.params());
  EXPECT_EQ(back.f_sas.sizes(), pair.f_sas.sizes());
  EXPECT_EQ(back.sas_norm.scale, pair.sas_norm.scale);
  EXPECT_EQ(back.noise_std, 0.7);
  std::stringstream again;
  write_net_pair(again, back);
  ss.clear();
  ss.seekg(0);
  EXPECT_EQ(again.str(), ss.str());
}

TEST(NetClassifierPair, CheckpointRejectsGarbage) {
  std::istringstream bad("netpair v2\n");
  EXPECT_THROW(read_net_pair(bad), std::invalid_argument);
  std::istringstream truncated("netpair v1\nnoise_std 1\nsa_mean 1 0\n");
  EXPECT_THROW(read_net_pair(truncated), std::invalid_argument);
}

TEST(TrainNetPair, IndistinguishableDomainsGiveNearZero) {
  ArcherySpec spec;
  Rng rng(5);
  auto shots = [&](Rng& r, std::size_t n) {
    std::vector<ArcheryShot> out;
    for (std::size_t i = 0; i < n; ++i) {
      const double th = r.uniform(-2.0, 2.0);
      out.push_back({th, archery_sample(th, Domain::source, spec, r)});
    }
    return out;
  };
  Rng a = rng.split("a"), b = rng.split("b"), c = rng.split("c"), d = rng.split("d");
  auto src = shots(a, 5000), tgt = shots(b, 5000), held = shots(c, 2000);
  NetTrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 256;
  cfg.steps = 1000;
  Rng train_rng = rng.split("train");
  NetClassifierPair pair =
      train_net_pair(archery_features(src), archery_features(tgt), cfg, train_rng);
  ClassifierData h = archery_features(held);
  Eigen::VectorXd dr = pair.delta_r(h.sa, h.sas);
  EXPECT_LT(dr.cwiseAbs().mean(), 0.05);
  (void)d;
}

TEST(TrainNetPair, SeparableDomainsAreLearned) {
  // Target lands 3 m further right than the source: dr should be positive on
  // the right, negative on the left.
  Rng rng(6);
  std::vector<ArcheryShot> src, tgt;
  for (int i = 0; i < 4000; ++i) {
    const double th = rng.uniform(-2.0, 2.0);
    src.push_back({th, rng.normal(0.0, 1.0)});
    tgt.push_back({th, rng.normal(3.0, 1.0)});
  }
  NetTrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.steps = 2000;
  cfg.noise_std = 0.0;  // input noise would blur the ratio being recovered
  NetTrainLog log;
  NetClassifierPair pair =
      train_net_pair(archery_features(src), archery_features(tgt), cfg, rng, &log);
  Eigen::MatrixXd sa(1, 2), sas(2, 2);
  sa << 0.0, 0.0;
  sas << 0.0, 0.0, -1.0, 4.0;
  Eigen::VectorXd dr = pair.delta_r(sa, sas);
  // True values: log N(s'; 3, 1) - log N(s'; 0, 1) = 3 s' - 4.5.
  EXPECT_NEAR(dr[0], -7.5, 1.0);
  EXPECT_NEAR(dr[1], 7.5, 1.0);
  EXPECT_FALSE(log.step.empty());
  EXPECT_LT(log.validation.back().sas, log.validation.front().sas + 1e-9);
}

TEST(TrainNetPair, DeterministicPerSeed) {
  Rng rng(7);
  std::vector<ArcheryShot> src, tgt;
  for (int i = 0; i < 500; ++i) {
    src.push_back({rng.uniform(-2, 2), rng.normal()});
    tgt.push_back({rng.uniform(-2, 2), rng.normal(1.0, 0.5)});
  }
  NetTrainConfig cfg;
  cfg.steps = 200;
  Rng r1(9), r2(9);
  auto p1 = train_net_pair(archery_features(src), archery_features(tgt), cfg, r1);
  auto p2 = train_net_pair(archery_features(src), archery_features(tgt), cfg, r2);
  EXPECT_EQ(p1.f_sa.params(), p2.f_sa.params());
  EXPECT_EQ(p1.f_sas.params(), p2.f_sas.params());
}

TEST(TrainNetPair, NonFiniteLossAborts) {
  std::vector<ArcheryShot> src{{0.0, 1.0}, {0.5, std::numeric_limits<double>::quiet_NaN()}};
  std::vector<ArcheryShot> tgt{{0.0, 0.0}};
  NetTrainConfig cfg;
  cfg.standardize = false;
  cfg.steps = 50;
  Rng rng(8);
  try {
    train_net_pair(archery_features(src), archery_features(tgt), cfg, rng);
    FAIL();
  } catch (const ClassifierDivergence& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(TrainNetPair, RejectsEmptyBuffers) {
  NetTrainConfig cfg;
  Rng rng(9);
  std::vector<ArcheryShot> one{{0, 0}};
  EXPECT_THROW(train_net_pair(archery_features({}), archery_features(one), cfg, rng),
               std::invalid_argument);
}

}  // namespace
}  // namespace darc
