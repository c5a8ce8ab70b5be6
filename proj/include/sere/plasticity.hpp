#pragma once

#include "sere/mlp.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace sere {

struct SereParams {
  double decay = 0.9;        // eta in [0, 1]
  std::uint64_t maturity = 100;  // units with age > maturity are eligible
  bool single_reset_per_step = false;

  void validate() const {
    if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("sere decay must lie in [0, 1]");
  }
};

struct ResetEvent {
  std::size_t layer = 0;  // hidden layer index, 1-based (layer 0 is the input)
  std::size_t unit = 0;
  std::uint64_t step = 0;  // value of UtilityState::steps() when the reset happened
  double utility = 0;      // utility of the unit just before the reset
};

/// Per-unit bookkeeping for selective reinitialization of one network.
template <typename Scalar>
class UtilityState {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using AgeVector = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 1>;

  UtilityState() = default;

  UtilityState(const NetworkShape& shape, SereParams params, std::uint64_t seed)
      : params_(params), rng_(seed) {
    shape.validate();
    params_.validate();
    for (std::size_t l = 1; l + 1 < shape.widths.size(); ++l) {
      utilities_.push_back(Vector::Zero(shape.widths[l]));
      ages_.push_back(AgeVector::Zero(shape.widths[l]));
      counters_.push_back(Scalar(0));
    }
  }

  const SereParams& params() const { return params_; }
  std::size_t num_hidden() const { return utilities_.size(); }
  std::uint64_t steps() const { return steps_; }

  // Hidden layers are addressed 1..L to match Network layer numbering.
  Vector& utilities(std::size_t l) { return utilities_.at(l - 1); }
  const Vector& utilities(std::size_t l) const { return utilities_.at(l - 1); }
  AgeVector& ages(std::size_t l) { return ages_.at(l - 1); }
  const AgeVector& ages(std::size_t l) const { return ages_.at(l - 1); }
  Scalar& counter(std::size_t l) { return counters_.at(l - 1); }
  Scalar counter(std::size_t l) const { return counters_.at(l - 1); }

  std::size_t mature_count(std::size_t l) const {
    return static_cast<std::size_t>((ages(l).array() > params_.maturity).count());
  }

  std::mt19937_64& rng() { return rng_; }

  void check_matches(const NetworkShape& shape) const {
    if (shape.num_hidden() != utilities_.size())
      throw std::invalid_argument("utility state does not match network depth");
    for (std::size_t l = 1; l <= utilities_.size(); ++l)
      if (static_cast<std::size_t>(utilities(l).size()) != shape.widths[l])
        throw std::invalid_argument("utility state does not match network width");
  }

  void advance() { ++steps_; }

 private:
  SereParams params_;
  std::vector<Vector> utilities_;
  std::vector<AgeVector> ages_;
  std::vector<Scalar> counters_;
  std::uint64_t steps_ = 0;
  std::mt19937_64 rng_;
};

/// Decayed contribution utility: u <- eta*u + (1-eta)*|h|*sum_j |w_out|. Ages grow by one.
template <typename Scalar>
void update_utilities(UtilityState<Scalar>& state, const Network<Scalar>& net, const ForwardTrace<Scalar>& trace) {
  state.check_matches(net.shape());
  if (trace.activations.size() != net.shape().widths.size() - 1)
    throw std::invalid_argument("update_utilities: trace depth does not match network");
  const Scalar eta = static_cast<Scalar>(state.params().decay);
  for (std::size_t l = 1; l <= state.num_hidden(); ++l) {
    const auto& h = trace.hidden(l);
    if (h.size() != state.utilities(l).size()) throw std::invalid_argument("update_utilities: trace width mismatch");
    auto outgoing = net.weights(l).cwiseAbs().colwise().sum().transpose();
    state.utilities(l) = eta * state.utilities(l) + (Scalar(1) - eta) * h.cwiseAbs().cwiseProduct(outgoing);
    state.ages(l).array() += 1;
  }
  state.advance();
}

/// Redraws the incoming weights of hidden unit (l, i) from the Kaiming-uniform
/// distribution, zeroes its outgoing weights and its bias.
template <typename Scalar, typename Rng>
void reinitialize_unit(Network<Scalar>& net, std::size_t l, std::size_t i, Rng& rng) {
  auto& in = net.weights(l - 1);
  auto row = in.row(static_cast<Eigen::Index>(i));
  fill_kaiming(row, static_cast<std::size_t>(in.cols()), rng);
  net.bias(l - 1)(static_cast<Eigen::Index>(i)) = Scalar(0);
  net.weights(l).col(static_cast<Eigen::Index>(i)).setZero();
}

/// Counter accumulation and victim replacement for every hidden layer. Returns the
/// resets performed, in order.
template <typename Scalar>
std::vector<ResetEvent> accumulate_and_maybe_reset(UtilityState<Scalar>& state, Network<Scalar>& net, double rho) {
  state.check_matches(net.shape());
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("replacement rate must lie in [0, 1]");
  std::vector<ResetEvent> events;
  const auto maturity = state.params().maturity;
  for (std::size_t l = 1; l <= state.num_hidden(); ++l) {
    const std::size_t mature = state.mature_count(l);
    state.counter(l) += static_cast<Scalar>(rho) * static_cast<Scalar>(mature);
    auto& u = state.utilities(l);
    auto& age = state.ages(l);
    while (state.counter(l) >= Scalar(1)) {
      Eigen::Index victim = -1;
      for (Eigen::Index i = 0; i < u.size(); ++i)
        if (age(i) > maturity && (victim < 0 || u(i) < u(victim))) victim = i;
      if (victim < 0) break;
      events.push_back({l, static_cast<std::size_t>(victim), state.steps(), static_cast<double>(u(victim))});
      reinitialize_unit(net, l, static_cast<std::size_t>(victim), state.rng());
      u(victim) = Scalar(0);
      age(victim) = 0;
      state.counter(l) -= Scalar(1);
      if (state.params().single_reset_per_step) break;
    }
  }
  return events;
}

/// One selective-reinitialization step: utility update followed by replacement.
template <typename Scalar>
std::vector<ResetEvent> sere_step(UtilityState<Scalar>& state, Network<Scalar>& net,
                                  const ForwardTrace<Scalar>& trace, double rho) {
  update_utilities(state, net, trace);
  return accumulate_and_maybe_reset(state, net, rho);
}

}  // namespace sere
