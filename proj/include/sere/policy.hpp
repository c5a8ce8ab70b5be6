#pragma once

#include "sere/clustering.hpp"
#include "sere/design_matrix.hpp"
#include "sere/drift.hpp"
#include "sere/mlp.hpp"
#include "sere/plasticity.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sere {

enum class ClusteringStrategy { club, mcnb };

struct PolicyConfig {
  std::vector<std::size_t> hidden{64, 64};
  double lr = 0.01;
  double beta_user = 0.1;
  double beta_cluster = 0.1;
  double ridge = 1.0;
  ClusteringStrategy clustering = ClusteringStrategy::club;
  double epsilon1 = 1.0;           // graph threshold on final-layer weights
  double reward_tolerance = 1e-2;  // reward-identity grouping tolerance
  bool sere_enabled = true;
  bool sere_on_clusters = false;
  SereParams sere;
  PhaParams detector;
  std::uint64_t reinversion_period = 500;
  bool shared_init = true;  // every user network starts from the same Kaiming draw

  void validate() const;
};

/// Splits a base seed into independent streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

struct UserLearner {
  UserId user = 0;
  Network<double> net;
  UtilityState<double> sere;
  DesignMatrix<double> design;
  std::uint64_t plays = 0;
};

/// Cluster-level learner derived from its members: mean network and pooled design matrix.
struct ClusterLearner {
  std::vector<UserId> members;
  Network<double> net;
  Eigen::MatrixXd design;
  Eigen::LLT<Eigen::MatrixXd> factor;

  static ClusterLearner build(std::vector<UserId> members, std::span<const UserLearner* const> learners,
                              double ridge);
  double quad_form(const Eigen::VectorXd& phi) const;
};

struct ArmScore {
  double predicted = 0;   // user-network prediction clamped to [0, 1]
  double confidence = 0;  // user + cluster exploration bonus
  double ucb = 0;
};

/// Upper confidence values for every column of `arms` (one arm per column).
std::vector<ArmScore> ucb_scores(const UserLearner& user, const ClusterLearner& cluster, const Eigen::MatrixXd& arms,
                                 double beta_user, double beta_cluster);

/// Index of the largest score; ties go to the lowest index.
std::size_t select_arm(std::span<const double> scores);
std::size_t select_arm(std::span<const ArmScore> scores);

struct RoundInput {
  std::uint64_t t = 0;
  UserId user = 0;
  Eigen::MatrixXd arms;  // d x K
};

struct LearnerReset {
  UserId learner = 0;
  bool cluster = false;
  ResetEvent event;
};

struct RoundOutcome {
  std::uint64_t t = 0;
  UserId user = 0;
  std::size_t chosen = 0;
  double predicted = 0;
  double reward = 0;
  double pha = 0;
  double pha_min = 0;
  double deviation = 0;
  double rho = 0;  // replacement rate applied this round (0 when SeRe is off)
  bool drift = false;
  std::size_t num_clusters = 0;  // q_t, or q_t^{I_t} in per-arm mode
  std::size_t cluster_size = 0;
  std::vector<LearnerReset> resets;
  double sere_ms = 0;
};

/// Clustering-of-neural-bandits policy with optional selective reinitialization.
class CnbPolicy {
 public:
  using RewardOracle = std::function<double(std::size_t)>;

  CnbPolicy(PolicyConfig config, std::size_t arm_dim, std::uint64_t seed);

  /// Cluster, score, select, play, update the user learner, feed the drift detector,
  /// then run SeRe on the networks updated this round.
  RoundOutcome play_round(const RoundInput& round, const RewardOracle& play);

  const PolicyConfig& config() const { return config_; }
  const PhaDetector& detector() const { return detector_; }
  const std::map<UserId, UserLearner>& learners() const { return learners_; }
  const UserLearner* learner(UserId user) const;
  const NetworkShape& shape() const { return shape_; }

  /// Instantiates the learner for `user` if it does not exist yet.
  const UserLearner& touch(UserId user) { return ensure_learner(user); }

 private:
  UserLearner& ensure_learner(UserId user);
  std::vector<const ClusterLearner*> cluster_learners(const RoundInput& round, std::size_t& num_clusters);
  const ClusterLearner& cached_cluster(std::vector<UserId> members);

  PolicyConfig config_;
  NetworkShape shape_;
  std::uint64_t seed_;
  std::map<UserId, UserLearner> learners_;
  PhaDetector detector_;
  std::map<std::vector<UserId>, ClusterLearner> round_clusters_;
  std::vector<std::size_t> cluster_counts_;
  std::map<std::vector<UserId>, UtilityState<double>> cluster_states_;
};

}  // namespace sere
