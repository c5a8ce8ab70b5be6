#include "sere/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace sere {

void PolicyConfig::validate() const {
  if (hidden.empty()) throw std::invalid_argument("policy needs at least one hidden layer");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta_user >= 0.0 && beta_cluster >= 0.0)) throw std::invalid_argument("exploration coefficients must be >= 0");
  if (!(ridge > 0.0)) throw std::invalid_argument("ridge must be positive");
  if (!(epsilon1 > 0.0)) throw std::invalid_argument("epsilon1 must be positive");
  if (!(reward_tolerance >= 0.0)) throw std::invalid_argument("reward tolerance must be >= 0");
  sere.validate();
  detector.validate();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a combined key
  std::uint64_t z = base ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xC2B2AE3D27D4EB4FULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kResetStream = 2;
constexpr std::uint64_t kClusterResetStream = 3;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

ClusterLearner ClusterLearner::build(std::vector<UserId> members, std::span<const UserLearner* const> learners,
                                     double ridge) {
  if (learners.empty()) throw std::invalid_argument("cluster learner needs members");
  ClusterLearner c;
  c.members = std::move(members);
  std::vector<const Network<double>*> nets;
  nets.reserve(learners.size());
  for (const auto* l : learners) nets.push_back(&l->net);
  c.net = average_networks<double>(nets);
  const auto dim = learners.front()->design.dim();
  c.design = Eigen::MatrixXd::Identity(dim, dim) * ridge;
  for (const auto* l : learners) {
    c.design += l->design.matrix();
    c.design.diagonal().array() -= l->design.ridge();
  }
  c.design = 0.5 * (c.design + c.design.transpose()).eval();
  c.factor.compute(c.design);
  // Summing member matrices and removing the extra ridges can cancel to a slightly
  // indefinite matrix when features are large; restore the ridge floor and retry.
  for (int attempt = 0; c.factor.info() != Eigen::Success && attempt < 8; ++attempt) {
    c.design.diagonal().array() += ridge * std::pow(10.0, attempt - 6) * (1.0 + c.design.diagonal().cwiseAbs().maxCoeff());
    c.factor.compute(c.design);
  }
  if (c.factor.info() != Eigen::Success) throw std::runtime_error("cluster design matrix is not positive definite");
  return c;
}

double ClusterLearner::quad_form(const Eigen::VectorXd& phi) const {
  return std::max(0.0, factor.matrixL().solve(phi).squaredNorm());
}

std::vector<ArmScore> ucb_scores(const UserLearner& user, const ClusterLearner& cluster, const Eigen::MatrixXd& arms,
                                 double beta_user, double beta_cluster) {
  if (arms.cols() < 1) throw std::invalid_argument("ucb_scores: no arms");
  Eigen::VectorXd preds, unused;
  const Eigen::MatrixXd phi_u = forward_batch(user.net, arms, preds);
  const Eigen::MatrixXd phi_c = forward_batch(cluster.net, arms, unused);
  const Eigen::MatrixXd solved_u = user.design.inverse() * phi_u;
  const Eigen::MatrixXd solved_c = cluster.factor.matrixL().solve(phi_c);
  std::vector<ArmScore> out(static_cast<std::size_t>(arms.cols()));
  for (Eigen::Index i = 0; i < arms.cols(); ++i) {
    const double qu = std::max(0.0, phi_u.col(i).dot(solved_u.col(i)));
    const double qc = solved_c.col(i).squaredNorm();
    auto& s = out[static_cast<std::size_t>(i)];
    s.predicted = clamp01(preds(i));
    s.confidence = beta_user * std::sqrt(qu) + beta_cluster * std::sqrt(qc);
    s.ucb = s.predicted + s.confidence;
    if (!std::isfinite(s.ucb)) throw std::runtime_error("ucb_scores: non-finite score");
  }
  return out;
}

std::size_t select_arm(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_arm: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::size_t select_arm(std::span<const ArmScore> scores) {
  std::vector<double> u(scores.size());
  std::transform(scores.begin(), scores.end(), u.begin(), [](const ArmScore& s) { return s.ucb; });
  return select_arm(std::span<const double>(u));
}

CnbPolicy::CnbPolicy(PolicyConfig config, std::size_t arm_dim, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), detector_(config_.detector) {
  config_.validate();
  shape_ = NetworkShape::make(arm_dim, config_.hidden);
  shape_.validate();
}

const UserLearner* CnbPolicy::learner(UserId user) const {
  auto it = learners_.find(user);
  return it == learners_.end() ? nullptr : &it->second;
}

UserLearner& CnbPolicy::ensure_learner(UserId user) {
  auto it = learners_.find(user);
  if (it != learners_.end()) return it->second;
  UserLearner l;
  l.user = user;
  const auto init_seed = derive_seed(seed_, kInitStream, config_.shared_init ? 0 : user + 1);
  l.net = init_kaiming<double>(shape_, init_seed);
  l.sere = UtilityState<double>(shape_, config_.sere, derive_seed(seed_, kResetStream, user));
  l.design = DesignMatrix<double>(static_cast<Eigen::Index>(shape_.feature_width()), config_.ridge,
                                  config_.reinversion_period);
  return learners_.emplace(user, std::move(l)).first->second;
}

const ClusterLearner& CnbPolicy::cached_cluster(std::vector<UserId> members) {
  auto it = round_clusters_.find(members);
  if (it != round_clusters_.end()) return it->second;
  std::vector<const UserLearner*> ls;
  ls.reserve(members.size());
  for (auto u : members) ls.push_back(&learners_.at(u));
  auto key = members;
  return round_clusters_.emplace(std::move(key), ClusterLearner::build(std::move(members), ls, config_.ridge))
      .first->second;
}

std::vector<const ClusterLearner*> CnbPolicy::cluster_learners(const RoundInput& round, std::size_t& num_clusters) {
  const auto k = static_cast<std::size_t>(round.arms.cols());
  std::vector<const ClusterLearner*> per_arm(k, nullptr);
  if (config_.clustering == ClusteringStrategy::club) {
    std::vector<UserEmbedding<double>> emb;
    emb.reserve(learners_.size());
    for (const auto& [id, l] : learners_) emb.push_back({id, l.net.output_weights().transpose()});
    const auto assignment = club_clusters<double>(emb, config_.epsilon1);
    num_clusters = assignment.size();
    const auto& c = cached_cluster(assignment.clusters.at(assignment.cluster_of(round.user)));
    std::fill(per_arm.begin(), per_arm.end(), &c);
    return per_arm;
  }

  std::vector<UserId> users;
  Eigen::MatrixXd preds(static_cast<Eigen::Index>(learners_.size()), round.arms.cols());
  Eigen::VectorXd p;
  for (const auto& [id, l] : learners_) {
    forward_batch(l.net, round.arms, p);
    preds.row(static_cast<Eigen::Index>(users.size())) = p.transpose().cwiseMax(0.0).cwiseMin(1.0);
    users.push_back(id);
  }
  std::vector<std::size_t> counts(k);
  std::vector<double> col(users.size());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t u = 0; u < users.size(); ++u) col[u] = preds(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i));
    const auto assignment = mcnb_clusters(users, col, config_.reward_tolerance);
    counts[i] = assignment.size();
    per_arm[i] = &cached_cluster(assignment.clusters.at(assignment.cluster_of(round.user)));
  }
  num_clusters = counts.front();
  cluster_counts_ = std::move(counts);
  return per_arm;
}

RoundOutcome CnbPolicy::play_round(const RoundInput& round, const RewardOracle& play) {
  if (round.arms.rows() != static_cast<Eigen::Index>(shape_.input_width()))
    throw std::invalid_argument("play_round: arm dimension mismatch");
  if (round.arms.cols() < 1) throw std::invalid_argument("play_round: no arms");
  RoundOutcome out;
  out.t = round.t;
  out.user = round.user;
  UserLearner& user = ensure_learner(round.user);

  round_clusters_.clear();
  cluster_counts_.clear();
  std::size_t num_clusters = 0;
  const auto clusters = cluster_learners(round, num_clusters);

  std::vector<ArmScore> scores(static_cast<std::size_t>(round.arms.cols()));
  if (config_.clustering == ClusteringStrategy::club) {
    scores = ucb_scores(user, *clusters.front(), round.arms, config_.beta_user, config_.beta_cluster);
  } else {
    for (Eigen::Index i = 0; i < round.arms.cols(); ++i) {
      const auto s = ucb_scores(user, *clusters[static_cast<std::size_t>(i)], round.arms.col(i), config_.beta_user,
                                config_.beta_cluster);
      scores[static_cast<std::size_t>(i)] = s.front();
    }
  }
  const std::size_t chosen = select_arm(std::span<const ArmScore>(scores));
  out.chosen = chosen;
  out.predicted = scores[chosen].predicted;
  out.num_clusters = cluster_counts_.empty() ? num_clusters : cluster_counts_[chosen];
  out.cluster_size = clusters[chosen]->members.size();

  const double reward = play(chosen);
  out.reward = reward;

  const Eigen::VectorXd arm = round.arms.col(static_cast<Eigen::Index>(chosen));
  ForwardTrace<double> trace;
  try {
    trace = sgd_step(user.net, arm, reward, config_.lr);
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(round.t) + ": " + e.what());
  }
  user.design.add(trace.last_hidden());
  ++user.plays;

  const auto decision = detector_.step(std::abs(reward - out.predicted));
  out.pha = detector_.pha();
  out.pha_min = detector_.pha_min();
  out.deviation = decision.deviation;
  out.drift = decision.drift;

  if (config_.sere_enabled) {
    out.rho = decision.rho;
    const auto start = std::chrono::steady_clock::now();
    for (const auto& ev : sere_step(user.sere, user.net, trace, decision.rho))
      out.resets.push_back({user.user, false, ev});
    if (config_.sere_on_clusters) {
      // Cluster networks are rebuilt from members each round, so these resets only
      // affect the current round's derived network.
      auto& cluster = round_clusters_.at(clusters[chosen]->members);
      auto it = cluster_states_.find(cluster.members);
      if (it == cluster_states_.end())
        it = cluster_states_
                 .emplace(cluster.members, UtilityState<double>(shape_, config_.sere,
                                                                derive_seed(seed_, kClusterResetStream,
                                                                            cluster.members.front())))
                 .first;
      const auto ctrace = forward(cluster.net, arm);
      for (const auto& ev : sere_step(it->second, cluster.net, ctrace, decision.rho))
        out.resets.push_back({cluster.members.front(), true, ev});
    }
    out.sere_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

}  // namespace sere
