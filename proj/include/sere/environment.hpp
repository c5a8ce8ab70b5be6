#pragma once

#include "sere/clustering.hpp"
#include "sere/policy.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sere {

enum class RewardFamily { cosine, quadratic };

/// Nonlinear ground truth on an inner product in [-1, 1], mapped into [0, 1].
/// cosine: (1 + cos(3x)) / 2, quadratic: x^2.
double reward_family(RewardFamily family, double inner);

/// A bandit environment: yields rounds and reveals only the played arm's reward.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t arm_dim() const = 0;
  /// Next round, or nullopt once the horizon is exhausted.
  virtual std::optional<RoundInput> next() = 0;
  /// Realized reward of `arm` in the current round.
  virtual double play(std::size_t arm) = 0;
  /// Instantaneous regret of choosing `arm` in the current round.
  virtual double regret(std::size_t arm) const = 0;
};

/// Unit-norm user preference vectors grouped around `n_groups` centres.
Eigen::MatrixXd make_user_features(std::size_t n_users, std::size_t dim, std::size_t n_groups, double spread,
                                   std::uint64_t seed);

struct SyntheticEnvSpec {
  std::size_t n_users = 10;
  std::size_t dim = 8;
  std::size_t arms = 10;
  std::uint64_t horizon = 10000;
  std::vector<std::uint64_t> change_points;  // 1-based rounds where a new piece starts
  double noise_sigma = 0.05;
  RewardFamily family = RewardFamily::cosine;
  std::size_t n_groups = 3;
  double group_spread = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Piecewise-stationary synthetic environment: per user and piece a hidden preference
/// vector theta; g(a) = family(a . theta); reward = clamp(g + N(0, sigma^2), 0, 1).
class PiecewiseEnvironment : public Environment {
 public:
  explicit PiecewiseEnvironment(SyntheticEnvSpec spec);

  std::size_t arm_dim() const override { return spec_.dim; }
  std::optional<RoundInput> next() override;
  double play(std::size_t arm) override;
  double regret(std::size_t arm) const override;

  /// g for the current round (test surface; not visible to policies).
  const Eigen::VectorXd& true_means() const { return means_; }
  /// Index of the piece active at round t.
  std::size_t piece_at(std::uint64_t t) const;
  double true_reward(UserId user, std::uint64_t t, const Eigen::VectorXd& arm) const;

 private:
  SyntheticEnvSpec spec_;
  std::vector<Eigen::MatrixXd> thetas_;  // per piece, n_users x dim
  std::mt19937_64 rng_;
  std::uint64_t t_ = 0;
  Eigen::VectorXd means_;
  Eigen::VectorXd rewards_;
};

PiecewiseEnvironment gen_piecewise(const SyntheticEnvSpec& spec);

struct PerturbedEnvSpec {
  std::size_t arms = 10;
  std::uint64_t horizon = 10000;
  std::uint64_t period = 200;
  double sigma = 0.1;
  double noise_sigma = 0.05;
  RewardFamily family = RewardFamily::cosine;
  std::uint64_t seed = 1;
};

/// Feature-perturbation environment: user preference vectors receive i.i.d.
/// N(0, sigma^2) noise (then re-normalization) at the start of every round t with
/// t % period == 0. Arms are fresh unit item vectors each round.
class PerturbedEnvironment : public Environment {
 public:
  PerturbedEnvironment(Eigen::MatrixXd base_features, PerturbedEnvSpec spec);

  std::size_t arm_dim() const override { return static_cast<std::size_t>(features_.cols()); }
  std::optional<RoundInput> next() override;
  double play(std::size_t arm) override;
  double regret(std::size_t arm) const override;

  const Eigen::MatrixXd& user_features() const { return features_; }
  const Eigen::VectorXd& true_means() const { return means_; }
  /// Noise added at the most recent perturbation (n_users x dim), before re-normalization.
  const Eigen::MatrixXd& last_noise() const { return last_noise_; }
  std::uint64_t perturbations() const { return perturbations_; }

 private:
  Eigen::MatrixXd features_;
  PerturbedEnvSpec spec_;
  std::mt19937_64 rng_;
  std::mt19937_64 noise_rng_;
  std::uint64_t t_ = 0;
  std::uint64_t perturbations_ = 0;
  Eigen::MatrixXd last_noise_;
  Eigen::VectorXd means_;
  Eigen::VectorXd rewards_;
};

PerturbedEnvironment gen_perturbed(Eigen::MatrixXd base_features, std::uint64_t period, double sigma,
                                   std::uint64_t seed, PerturbedEnvSpec spec = {});

// ---------------------------------------------------------------------------
// Offline ratings pipeline

struct IngestOptions {
  std::size_t rank = 10;  // SVD rank per side, arm dimension is 2 * rank
  std::size_t top_users = 10000;
  std::size_t top_items = 10000;
  double positive_threshold = 4.0;  // rating > threshold is a positive
  std::size_t n_groups = 50;
  std::size_t min_negatives = 9;
  std::size_t kmeans_iterations = 100;
  std::uint64_t seed = 7;
};

struct RatingsDataset {
  std::vector<std::int64_t> user_ids;  // original ids, row order of user_features
  std::vector<std::int64_t> item_ids;
  Eigen::MatrixXd user_features;  // rows l2-normalized
  Eigen::MatrixXd item_features;
  std::vector<std::vector<std::uint32_t>> positives;  // item indices per user
  std::vector<std::vector<std::uint32_t>> negatives;
  std::vector<int> user_group;                     // -1 for users excluded from sampling
  std::vector<std::vector<std::uint32_t>> groups;  // eligible users per group
  std::size_t excluded_users = 0;

  std::size_t arm_dim() const { return static_cast<std::size_t>(user_features.cols() + item_features.cols()); }
  std::size_t non_empty_groups() const;
};

struct RatingTriple {
  std::int64_t user;
  std::int64_t item;
  double rating;
};

/// Reads `user_id,item_id,rating` records (comma, tab or whitespace separated; an optional
/// non-numeric header line is skipped).
std::vector<RatingTriple> read_ratings(const std::string& path);

RatingsDataset build_dataset(const std::vector<RatingTriple>& triples, const IngestOptions& options);
RatingsDataset ingest_ratings(const std::string& path, const IngestOptions& options = {});

void save_dataset(const RatingsDataset& data, const std::string& path);
RatingsDataset load_dataset(const std::string& path);

struct TruncatedSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
};

/// Randomized range-finder SVD truncated to `rank`.
TruncatedSvd truncated_svd(const Eigen::SparseMatrix<double>& a, std::size_t rank, std::uint64_t seed);

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x dim
  std::vector<int> labels;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; ties go to the lowest centroid index.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 100);

struct DatasetRound {
  UserId user = 0;  // dataset row index
  std::size_t group = 0;
  Eigen::MatrixXd arms;  // dim x K
  std::vector<double> rewards;
};

/// Draws a group uniformly, a user uniformly within it, then one positive and K-1
/// negative items in shuffled positions.
DatasetRound sample_round(const RatingsDataset& data, std::mt19937_64& rng, std::size_t arms = 10);

class DatasetEnvironment : public Environment {
 public:
  DatasetEnvironment(const RatingsDataset& data, std::uint64_t horizon, std::uint64_t seed, std::size_t arms = 10);

  std::size_t arm_dim() const override { return data_->arm_dim(); }
  std::optional<RoundInput> next() override;
  double play(std::size_t arm) override;
  double regret(std::size_t arm) const override;

 private:
  const RatingsDataset* data_;
  std::uint64_t horizon_;
  std::size_t arms_;
  std::mt19937_64 rng_;
  std::uint64_t t_ = 0;
  DatasetRound current_;
};

}  // namespace sere
