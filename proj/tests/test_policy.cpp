#include <gtest/gtest.h>

#include "sere/policy.hpp"

#include <random>

namespace sere {
namespace {

PolicyConfig small_config() {
  PolicyConfig c;
  c.hidden = {8, 8};
  c.lr = 0.05;
  return c;
}

UserLearner fresh_learner(const NetworkShape& shape, std::uint64_t seed) {
  UserLearner l;
  l.net = init_kaiming<double>(shape, seed);
  l.sere = UtilityState<double>(shape, SereParams{}, seed);
  l.design = DesignMatrix<double>(static_cast<Eigen::Index>(shape.feature_width()), 1.0);
  return l;
}

TEST(SelectArm, TieBreaksLow) {
  const std::vector<double> s{0.2, 0.9, 0.9};
  EXPECT_EQ(select_arm(s), 1u);
  EXPECT_EQ(select_arm(std::vector<double>{0.4}), 0u);
  EXPECT_THROW(select_arm(std::vector<double>{}), std::invalid_argument);
}

TEST(SelectArm, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> level(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 12);
    for (auto& v : s) v = level(rng) * 0.1;
    std::size_t best = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    EXPECT_EQ(select_arm(s), best);
  }
}

TEST(Ucb, ZeroBetasAreGreedy) {
  const auto shape = NetworkShape::make(4, {6});
  const auto user = fresh_learner(shape, 3);
  const UserLearner* members[] = {&user};
  const auto cluster = ClusterLearner::build({0}, members, 1.0);
  const Eigen::MatrixXd arms = Eigen::MatrixXd::Random(4, 5);
  const auto scores = ucb_scores(user, cluster, arms, 0.0, 0.0);
  for (Eigen::Index i = 0; i < arms.cols(); ++i) {
    const double pred = std::clamp(forward(user.net, arms.col(i)).prediction, 0.0, 1.0);
    EXPECT_EQ(scores[static_cast<std::size_t>(i)].ucb, pred);
  }
}

TEST(Ucb, UnitFeatureBonusIsOne) {
  DesignMatrix<double> d(5, 1.0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(5);
  phi(2) = 1.0;
  EXPECT_DOUBLE_EQ(1.0 * std::sqrt(d.quad_form(phi)), 1.0);
}

TEST(Ucb, ScalingBetasKeepsConfidenceArgmax) {
  const auto shape = NetworkShape::make(4, {6});
  auto user = fresh_learner(shape, 4);
  for (int i = 0; i < 10; ++i) user.design.add(Eigen::VectorXd::Random(6));
  const UserLearner* members[] = {&user};
  const auto cluster = ClusterLearner::build({0}, members, 1.0);
  const Eigen::MatrixXd arms = Eigen::MatrixXd::Random(4, 8);
  auto conf_argmax = [&](double scale) {
    const auto s = ucb_scores(user, cluster, arms, 0.3 * scale, 0.2 * scale);
    std::vector<double> c;
    for (const auto& x : s) c.push_back(x.confidence);
    return select_arm(c);
  };
  EXPECT_EQ(conf_argmax(1.0), conf_argmax(7.5));
}

TEST(ClusterLearner, PoolsDesignMatrices) {
  const auto shape = NetworkShape::make(3, {4});
  auto a = fresh_learner(shape, 1), b = fresh_learner(shape, 2);
  a.design.add(Eigen::Vector4d(1, 0, 0, 0));
  b.design.add(Eigen::Vector4d(0, 2, 0, 0));
  const UserLearner* members[] = {&a, &b};
  const auto c = ClusterLearner::build({0, 1}, members, 1.0);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(4, 4);
  expected(0, 0) += 1;
  expected(1, 1) += 4;
  EXPECT_TRUE(c.design.isApprox(expected));
  EXPECT_NEAR(c.quad_form(Eigen::Vector4d(0, 1, 0, 0)), 0.2, 1e-12);
  EXPECT_LT((c.net.weights(0) - 0.5 * (a.net.weights(0) + b.net.weights(0))).norm(), 1e-15);
}

TEST(Policy, LearnsBetterArmInTwoArmFixture) {
  PolicyConfig c = small_config();
  c.beta_user = c.beta_cluster = 0.0;
  c.sere_enabled = false;
  CnbPolicy p(c, 2, 5);
  RoundInput r;
  r.user = 0;
  r.arms = Eigen::Matrix2d::Identity();
  const double rewards[] = {1.0, 0.0};
  int zero_picks = 0;
  for (std::uint64_t t = 1; t <= 600; ++t) {
    r.t = t;
    const auto o = p.play_round(r, [&](std::size_t a) { return rewards[a]; });
    if (t > 500 && o.chosen == 0) ++zero_picks;
  }
  EXPECT_EQ(zero_picks, 100);
}

std::vector<RoundOutcome> drive(const PolicyConfig& c, std::uint64_t rounds, std::uint64_t seed) {
  CnbPolicy p(c, 5, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<RoundOutcome> out;
  for (std::uint64_t t = 1; t <= rounds; ++t) {
    RoundInput r;
    r.t = t;
    r.user = static_cast<UserId>(rng() % 4);
    r.arms = Eigen::MatrixXd::Random(5, 6);
    const double noise = unif(rng);
    out.push_back(p.play_round(r, [&](std::size_t a) { return std::clamp(r.arms(0, a) + 0.1 * noise, 0.0, 1.0); }));
  }
  return out;
}

TEST(Policy, DisabledAndZeroRateAreIdentical) {
  PolicyConfig off = small_config();
  off.sere_enabled = false;
  PolicyConfig zero = small_config();
  zero.detector.rho_min = zero.detector.rho_max = zero.detector.scale = 0.0;
  std::srand(1);
  const auto a = drive(off, 300, 9);
  std::srand(1);
  const auto b = drive(zero, 300, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].chosen, b[i].chosen);
    EXPECT_EQ(a[i].predicted, b[i].predicted);
    EXPECT_EQ(a[i].rho, b[i].rho);
    EXPECT_TRUE(b[i].resets.empty());
  }
}

TEST(Policy, ResetsHappenWhenEnabled) {
  PolicyConfig c = small_config();
  c.sere.maturity = 5;
  std::srand(2);
  const auto out = drive(c, 400, 3);
  std::size_t resets = 0;
  for (const auto& o : out) {
    resets += o.resets.size();
    EXPECT_GE(o.rho, c.detector.rho_min);
    EXPECT_LE(o.rho, c.detector.rho_max);
  }
  EXPECT_GT(resets, 0u);
}

TEST(Policy, PerArmModeScoresEveryArm) {
  PolicyConfig c = small_config();
  c.clustering = ClusteringStrategy::mcnb;
  std::srand(3);
  const auto out = drive(c, 200, 4);
  for (const auto& o : out) {
    EXPECT_GE(o.num_clusters, 1u);
    EXPECT_GE(o.cluster_size, 1u);
  }
}

TEST(Policy, ArmDimensionMismatchThrows) {
  CnbPolicy p(small_config(), 3, 1);
  RoundInput r;
  r.t = 1;
  r.arms = Eigen::MatrixXd::Random(4, 2);
  EXPECT_THROW(p.play_round(r, [](std::size_t) { return 0.0; }), std::invalid_argument);
}

TEST(Policy, ConfigValidation) {
  PolicyConfig c = small_config();
  c.lr = 0;
  EXPECT_THROW(CnbPolicy(c, 3, 1), std::invalid_argument);
  c = small_config();
  c.detector.scale = 0.02;
  c.detector.threshold = 0.7;
  c.detector.rho_min = 0.04;
  c.detector.rho_max = 0.05;
  EXPECT_THROW(CnbPolicy(c, 3, 1), std::invalid_argument);
}

TEST(Seeds, StreamsDiffer) {
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1, 0), derive_seed(1, 1, 1));
  EXPECT_EQ(derive_seed(5, 3, 2), derive_seed(5, 3, 2));
}

}  // namespace
}  // namespace sere
