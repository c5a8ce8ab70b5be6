#include <gtest/gtest.h>

#include "sere/plasticity.hpp"

namespace sere {
namespace {

// One hidden layer of `width` units, fed by a single input.
struct SingleLayer {
  NetworkShape shape;
  Network<double> net;
  UtilityState<double> state;

  SingleLayer(std::size_t width, SereParams p)
      : shape{1, width, 1}, net(init_kaiming<double>(shape, 3)), state(shape, p, 17) {}

  void make_mature() {
    state.ages(1).setConstant(state.params().maturity + 1);
  }
};

ForwardTrace<double> trace_for(const Network<double>& net, double x) {
  return forward(net, Eigen::VectorXd::Constant(1, x));
}

TEST(Utility, WorkedExample) {
  // u = 0.5, eta = 0.9, |h| = 1, outgoing {0.2, -0.3}: 0.9*0.5 + 0.1*1*0.5 = 0.50
  NetworkShape shape{1, 1, 2, 1};
  Network<double> net(shape);
  net.weights(0)(0, 0) = 1.0;
  net.weights(1) << 0.2, -0.3;
  UtilityState<double> st(shape, SereParams{0.9, 100, false}, 1);
  st.utilities(1)(0) = 0.5;
  update_utilities(st, net, trace_for(net, 1.0));
  EXPECT_NEAR(st.utilities(1)(0), 0.50, 1e-15);
  EXPECT_EQ(st.ages(1)(0), 1u);
}

TEST(Utility, FullDecayKeepsHistory) {
  SingleLayer s(4, SereParams{1.0, 10, false});
  s.state.utilities(1) << 0.1, 0.2, 0.3, 0.4;
  const Eigen::VectorXd before = s.state.utilities(1);
  update_utilities(s.state, s.net, trace_for(s.net, 0.7));
  EXPECT_EQ(s.state.utilities(1), before);
  EXPECT_TRUE((s.state.ages(1).array() == 1).all());
}

TEST(Utility, DeadUnitDecays) {
  SingleLayer s(2, SereParams{0.8, 10, false});
  s.net.weights(0) << 1.0, -1.0;  // unit 1 is dead for positive inputs
  s.net.bias(0).setZero();
  s.state.utilities(1) << 0.3, 0.3;
  update_utilities(s.state, s.net, trace_for(s.net, 1.0));
  EXPECT_DOUBLE_EQ(s.state.utilities(1)(1), 0.8 * 0.3);
}

TEST(Reset, YoungUnitsNeverReset) {
  SingleLayer s(10, SereParams{0.9, 1000, false});
  for (int i = 0; i < 500; ++i) EXPECT_TRUE(sere_step(s.state, s.net, trace_for(s.net, 0.5), 0.1).empty());
  EXPECT_EQ(s.state.counter(1), 0.0);
}

TEST(Reset, OneResetPerStepAtUnitCounterRate) {
  // rho = 0.1 with 10 mature units adds exactly 1 per step.
  SingleLayer s(10, SereParams{0.9, 0, false});
  s.make_mature();
  for (int step = 0; step < 5; ++step) {
    // Reset units are immature again, so keep the whole layer eligible.
    s.make_mature();
    const auto ev = accumulate_and_maybe_reset(s.state, s.net, 0.1);
    EXPECT_EQ(ev.size(), 1u);
    EXPECT_NEAR(s.state.counter(1), 0.0, 1e-12);
  }
}

TEST(Reset, ArgminVictimAndZeroedOutgoing) {
  SingleLayer s(3, SereParams{0.9, 5, false});
  s.make_mature();
  s.state.utilities(1) << 0.3, 0.1, 0.2;
  s.state.counter(1) = 0.7;
  const auto ev = accumulate_and_maybe_reset(s.state, s.net, 0.1);  // +0.3 reaches 1
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].unit, 1u);
  EXPECT_EQ(ev[0].layer, 1u);
  EXPECT_DOUBLE_EQ(ev[0].utility, 0.1);
  EXPECT_TRUE(s.net.weights(1).col(1).isZero(0.0));
  EXPECT_EQ(s.net.bias(0)(1), 0.0);
  EXPECT_LE(std::abs(s.net.weights(0)(1, 0)), kaiming_bound<double>(1));
  EXPECT_EQ(s.state.utilities(1)(1), 0.0);
  EXPECT_EQ(s.state.ages(1)(1), 0u);
  EXPECT_NEAR(s.state.counter(1), 0.0, 1e-12);
}

TEST(Reset, TiesGoToLowestIndex) {
  SingleLayer s(4, SereParams{0.9, 5, false});
  s.make_mature();
  s.state.utilities(1) << 0.5, 0.2, 0.2, 0.9;
  s.state.counter(1) = 1.0;
  const auto ev = accumulate_and_maybe_reset(s.state, s.net, 0.0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].unit, 1u);
}

TEST(Reset, ResetUnitIneligibleForMaturitySteps) {
  const std::uint64_t m = 20;
  SingleLayer s(1, SereParams{0.9, m, false});
  s.make_mature();
  s.state.counter(1) = 1.0;
  ASSERT_EQ(accumulate_and_maybe_reset(s.state, s.net, 0.0).size(), 1u);
  for (std::uint64_t k = 0; k < m; ++k)
    EXPECT_TRUE(sere_step(s.state, s.net, trace_for(s.net, 1.0), 0.9).empty()) << "step " << k;
}

TEST(Reset, LoopsUntilCounterBelowOneUnlessSingle) {
  SingleLayer loop(8, SereParams{0.9, 1, false});
  loop.make_mature();
  loop.state.counter(1) = 2.5;
  EXPECT_EQ(accumulate_and_maybe_reset(loop.state, loop.net, 0.0).size(), 2u);
  EXPECT_NEAR(loop.state.counter(1), 0.5, 1e-12);

  SingleLayer once(8, SereParams{0.9, 1, true});
  once.make_mature();
  once.state.counter(1) = 2.5;
  EXPECT_EQ(accumulate_and_maybe_reset(once.state, once.net, 0.0).size(), 1u);
  EXPECT_NEAR(once.state.counter(1), 1.5, 1e-12);
}

TEST(Reset, ZeroRateMatchesUtilityUpdateAlone) {
  SingleLayer a(6, SereParams{0.7, 0, false}), b(6, SereParams{0.7, 0, false});
  for (int i = 0; i < 50; ++i) {
    const double x = 0.1 * i - 2.0;
    EXPECT_TRUE(sere_step(a.state, a.net, trace_for(a.net, x), 0.0).empty());
    update_utilities(b.state, b.net, trace_for(b.net, x));
  }
  EXPECT_EQ(a.state.utilities(1), b.state.utilities(1));
  EXPECT_TRUE(a.net == b.net);
}

TEST(Reset, OutputUnitIsNeverRedrawn) {
  NetworkShape shape{3, 5, 4, 1};
  auto net = init_kaiming<double>(shape, 4);
  UtilityState<double> st(shape, SereParams{0.9, 0, false}, 2);
  const double out_bias = net.bias(2)(0);
  const Eigen::MatrixXd w_out = net.output_weights();
  st.ages(2).setConstant(1);
  st.counter(2) = 1.0;
  const auto ev = accumulate_and_maybe_reset(st, net, 0.0);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(net.bias(2)(0), out_bias);
  for (Eigen::Index j = 0; j < w_out.cols(); ++j)
    if (j != static_cast<Eigen::Index>(ev[0].unit)) EXPECT_EQ(net.output_weights()(0, j), w_out(0, j));
}

TEST(Reset, RejectsRateOutsideUnitInterval) {
  SingleLayer s(2, SereParams{});
  EXPECT_THROW(accumulate_and_maybe_reset(s.state, s.net, 1.5), std::invalid_argument);
  EXPECT_THROW(accumulate_and_maybe_reset(s.state, s.net, -0.1), std::invalid_argument);
}

TEST(Reset, DeterministicForSeed) {
  auto run = [] {
    SingleLayer s(16, SereParams{0.9, 3, false});
    for (int i = 0; i < 200; ++i) sere_step(s.state, s.net, trace_for(s.net, 0.01 * i), 0.05);
    return s.net;
  };
  EXPECT_TRUE(run() == run());
}

TEST(State, MismatchedShapeThrows) {
  UtilityState<double> st(NetworkShape{2, 3, 1}, SereParams{}, 1);
  Network<double> net(NetworkShape{2, 4, 1});
  EXPECT_THROW(accumulate_and_maybe_reset(st, net, 0.1), std::invalid_argument);
  EXPECT_THROW(UtilityState<double>(NetworkShape{2, 3, 1}, SereParams{1.5, 1, false}, 1), std::invalid_argument);
}

}  // namespace
}  // namespace sere
