#include "sere/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sere {

double reward_family(RewardFamily family, double inner) {
  switch (family) {
    case RewardFamily::cosine:
      return 0.5 * (1.0 + std::cos(3.0 * inner));
    case RewardFamily::quadratic:
      return std::clamp(inner * inner, 0.0, 1.0);
  }
  throw std::invalid_argument("unknown reward family");
}

namespace {

Eigen::VectorXd gaussian_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n01(rng);
  return v;
}

Eigen::VectorXd unit_vector(std::size_t dim, std::mt19937_64& rng) {
  for (;;) {
    Eigen::VectorXd v = gaussian_vector(dim, rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Eigen::MatrixXd random_arms(std::size_t dim, std::size_t k, std::mt19937_64& rng) {
  Eigen::MatrixXd arms(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < arms.cols(); ++i) arms.col(i) = unit_vector(dim, rng);
  return arms;
}

// Shared by both synthetic environments: means, noisy clamped rewards, regret.
void draw_rewards(const Eigen::VectorXd& means, double sigma, std::mt19937_64& rng, Eigen::VectorXd& rewards) {
  std::normal_distribution<double> noise(0.0, 1.0);
  rewards.resize(means.size());
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    const double xi = sigma > 0.0 ? sigma * noise(rng) : 0.0;
    rewards(i) = std::clamp(means(i) + xi, 0.0, 1.0);
  }
}

double gap_regret(const Eigen::VectorXd& means, std::size_t arm) {
  if (arm >= static_cast<std::size_t>(means.size())) throw std::out_of_range("regret: arm index out of range");
  return means.maxCoeff() - means(static_cast<Eigen::Index>(arm));
}

}  // namespace

Eigen::MatrixXd make_user_features(std::size_t n_users, std::size_t dim, std::size_t n_groups, double spread,
                                   std::uint64_t seed) {
  if (n_users == 0 || dim == 0) throw std::invalid_argument("user features need users and dimensions");
  if (n_groups == 0) n_groups = 1;
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> centres;
  for (std::size_t g = 0; g < n_groups; ++g) centres.push_back(unit_vector(dim, rng));
  Eigen::MatrixXd f(static_cast<Eigen::Index>(n_users), static_cast<Eigen::Index>(dim));
  for (std::size_t u = 0; u < n_users; ++u) {
    Eigen::VectorXd v = centres[u % n_groups] + spread * gaussian_vector(dim, rng);
    f.row(static_cast<Eigen::Index>(u)) = (v / v.norm()).transpose();
  }
  return f;
}

void SyntheticEnvSpec::validate() const {
  if (n_users == 0 || dim == 0) throw std::invalid_argument("synthetic env needs users and dimensions");
  if (arms < 2) throw std::invalid_argument("synthetic env needs at least two arms");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  std::uint64_t prev = 1;
  for (auto tau : change_points) {
    if (tau <= prev || tau > horizon) throw std::invalid_argument("change points must be increasing within (1, T]");
    prev = tau;
  }
}

PiecewiseEnvironment::PiecewiseEnvironment(SyntheticEnvSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  spec_.validate();
  for (std::size_t s = 0; s <= spec_.change_points.size(); ++s)
    thetas_.push_back(make_user_features(spec_.n_users, spec_.dim, spec_.n_groups, spec_.group_spread,
                                         derive_seed(spec_.seed, 11, s)));
}

std::size_t PiecewiseEnvironment::piece_at(std::uint64_t t) const {
  return static_cast<std::size_t>(
      std::upper_bound(spec_.change_points.begin(), spec_.change_points.end(), t) - spec_.change_points.begin());
}

double PiecewiseEnvironment::true_reward(UserId user, std::uint64_t t, const Eigen::VectorXd& arm) const {
  const auto& theta = thetas_.at(piece_at(t));
  return reward_family(spec_.family, theta.row(user).dot(arm));
}

std::optional<RoundInput> PiecewiseEnvironment::next() {
  if (t_ >= spec_.horizon) return std::nullopt;
  ++t_;
  RoundInput r;
  r.t = t_;
  r.user = static_cast<UserId>(std::uniform_int_distribution<std::size_t>(0, spec_.n_users - 1)(rng_));
  r.arms = random_arms(spec_.dim, spec_.arms, rng_);
  means_.resize(static_cast<Eigen::Index>(spec_.arms));
  for (Eigen::Index i = 0; i < r.arms.cols(); ++i) means_(i) = true_reward(r.user, t_, r.arms.col(i));
  draw_rewards(means_, spec_.noise_sigma, rng_, rewards_);
  return r;
}

double PiecewiseEnvironment::play(std::size_t arm) { return rewards_(static_cast<Eigen::Index>(arm)); }
double PiecewiseEnvironment::regret(std::size_t arm) const { return gap_regret(means_, arm); }

PiecewiseEnvironment gen_piecewise(const SyntheticEnvSpec& spec) { return PiecewiseEnvironment(spec); }

PerturbedEnvironment::PerturbedEnvironment(Eigen::MatrixXd base_features, PerturbedEnvSpec spec)
    : features_(std::move(base_features)),
      spec_(spec),
      rng_(spec.seed),
      noise_rng_(derive_seed(spec.seed, 12)) {
  if (features_.rows() == 0 || features_.cols() == 0) throw std::invalid_argument("perturbed env needs user features");
  if (spec_.period == 0) throw std::invalid_argument("perturbation period must be >= 1");
  if (spec_.arms < 2) throw std::invalid_argument("perturbed env needs at least two arms");
  if (!(spec_.sigma >= 0.0 && spec_.noise_sigma >= 0.0)) throw std::invalid_argument("noise levels must be >= 0");
  last_noise_ = Eigen::MatrixXd::Zero(features_.rows(), features_.cols());
}

std::optional<RoundInput> PerturbedEnvironment::next() {
  if (t_ >= spec_.horizon) return std::nullopt;
  ++t_;
  if (t_ % spec_.period == 0 && spec_.sigma > 0.0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index i = 0; i < last_noise_.rows(); ++i)
      for (Eigen::Index j = 0; j < last_noise_.cols(); ++j) last_noise_(i, j) = spec_.sigma * n01(noise_rng_);
    features_ += last_noise_;
    features_.rowwise().normalize();
    ++perturbations_;
  }
  RoundInput r;
  r.t = t_;
  r.user = static_cast<UserId>(
      std::uniform_int_distribution<Eigen::Index>(0, features_.rows() - 1)(rng_));
  r.arms = random_arms(static_cast<std::size_t>(features_.cols()), spec_.arms, rng_);
  means_ = (features_.row(r.user) * r.arms).transpose();
  for (Eigen::Index i = 0; i < means_.size(); ++i) means_(i) = reward_family(spec_.family, means_(i));
  draw_rewards(means_, spec_.noise_sigma, rng_, rewards_);
  return r;
}

double PerturbedEnvironment::play(std::size_t arm) { return rewards_(static_cast<Eigen::Index>(arm)); }
double PerturbedEnvironment::regret(std::size_t arm) const { return gap_regret(means_, arm); }

PerturbedEnvironment gen_perturbed(Eigen::MatrixXd base_features, std::uint64_t period, double sigma,
                                   std::uint64_t seed, PerturbedEnvSpec spec) {
  spec.period = period;
  spec.sigma = sigma;
  spec.seed = seed;
  return PerturbedEnvironment(std::move(base_features), spec);
}

}  // namespace sere
