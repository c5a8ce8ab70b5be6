#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sere {

using UserId = std::uint32_t;

template <typename Scalar>
struct UserEmbedding {
  UserId user = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> vector;
};

enum class ClusterMode { global, per_arm };

/// A partition of the active users. Each cluster is sorted by user id and clusters are
/// ordered by their smallest member, so equal partitions compare equal.
struct ClusterAssignment {
  ClusterMode mode = ClusterMode::global;
  std::vector<std::vector<UserId>> clusters;
  double epsilon1 = 0.0;
  double epsilon2 = 0.0;

  std::size_t size() const { return clusters.size(); }

  /// Index of the cluster holding `user`, or size() if absent.
  std::size_t cluster_of(UserId user) const {
    for (std::size_t c = 0; c < clusters.size(); ++c)
      if (std::binary_search(clusters[c].begin(), clusters[c].end(), user)) return c;
    return clusters.size();
  }
};

/// One assignment per arm (per-arm mode).
using PerArmAssignment = std::vector<ClusterAssignment>;

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

inline std::vector<std::vector<UserId>> canonical_groups(DisjointSets& sets, std::span<const UserId> users) {
  std::vector<std::vector<UserId>> groups;
  std::vector<std::size_t> root_slot(users.size(), users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto r = sets.find(i);
    if (root_slot[r] == users.size()) {
      root_slot[r] = groups.size();
      groups.emplace_back();
    }
    groups[root_slot[r]].push_back(users[i]);
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

}  // namespace detail

/// Item-independent clustering: connected components of the graph linking users whose
/// embeddings lie within epsilon1 (l2).
template <typename Scalar>
ClusterAssignment club_clusters(std::span<const UserEmbedding<Scalar>> embeddings, double epsilon1) {
  if (embeddings.empty()) throw std::invalid_argument("club_clusters: no users");
  if (!(epsilon1 > 0.0)) throw std::invalid_argument("club_clusters: epsilon1 must be positive");
  const std::size_t n = embeddings.size();
  std::vector<UserId> users(n);
  for (std::size_t i = 0; i < n; ++i) users[i] = embeddings[i].user;
  const Scalar eps_sq = static_cast<Scalar>(epsilon1 * epsilon1);
  detail::DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((embeddings[i].vector - embeddings[j].vector).squaredNorm() <= eps_sq) sets.unite(i, j);
  ClusterAssignment out;
  out.mode = ClusterMode::global;
  out.epsilon1 = epsilon1;
  out.clusters = detail::canonical_groups(sets, users);
  return out;
}

/// Reward-identity clustering for one arm: users whose predicted rewards are chained
/// within `tolerance` share a group (transitive closure).
inline ClusterAssignment mcnb_clusters(std::span<const UserId> users, std::span<const double> predicted_rewards,
                                       double tolerance) {
  if (users.size() != predicted_rewards.size())
    throw std::invalid_argument("mcnb_clusters: users and rewards differ in length");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("mcnb_clusters: tolerance must be non-negative");
  const std::size_t n = users.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted_rewards[a] < predicted_rewards[b]; });
  // In one dimension the transitive closure of |a-b| <= tol links sorted neighbours.
  detail::DisjointSets sets(n);
  for (std::size_t k = 1; k < n; ++k)
    if (predicted_rewards[order[k]] - predicted_rewards[order[k - 1]] <= tolerance) sets.unite(order[k], order[k - 1]);
  ClusterAssignment out;
  out.mode = ClusterMode::per_arm;
  out.epsilon1 = tolerance;
  if (n > 0) out.clusters = detail::canonical_groups(sets, users);
  return out;
}

struct ValidationReport {
  bool valid = true;
  std::vector<std::string> violations;

  void fail(std::string msg) {
    valid = false;
    violations.push_back(std::move(msg));
  }
};

/// Checks the (epsilon1, epsilon2)-cluster conditions on a global assignment:
/// (1) every intra-cluster distance <= epsilon1, (2) no cluster can be extended by an
/// outside user without breaking (1), (3) every inter-cluster distance >= epsilon2.
/// Users missing from `embeddings` are reported.
template <typename Scalar>
ValidationReport validate_assignment(const ClusterAssignment& assignment,
                                     std::span<const UserEmbedding<Scalar>> embeddings, double epsilon1,
                                     double epsilon2) {
  ValidationReport report;
  auto lookup = [&](UserId u) -> const UserEmbedding<Scalar>* {
    for (const auto& e : embeddings)
      if (e.user == u) return &e;
    return nullptr;
  };
  auto dist = [](const UserEmbedding<Scalar>* a, const UserEmbedding<Scalar>* b) {
    return static_cast<double>((a->vector - b->vector).norm());
  };

  std::vector<std::vector<const UserEmbedding<Scalar>*>> members(assignment.clusters.size());
  std::size_t covered = 0;
  for (std::size_t c = 0; c < assignment.clusters.size(); ++c) {
    for (auto u : assignment.clusters[c]) {
      const auto* e = lookup(u);
      if (!e) {
        report.fail("user " + std::to_string(u) + " has no embedding");
        continue;
      }
      members[c].push_back(e);
      ++covered;
    }
  }
  if (covered != embeddings.size()) report.fail("assignment does not cover every embedded user exactly once");

  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& m = members[c];
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j)
        if (dist(m[i], m[j]) > epsilon1) {
          std::ostringstream msg;
          msg << "condition 1: users " << m[i]->user << " and " << m[j]->user << " in cluster " << c
              << " are " << dist(m[i], m[j]) << " apart";
          report.fail(msg.str());
        }
  }

  for (std::size_t c = 0; c < members.size(); ++c) {
    for (std::size_t o = 0; o < members.size(); ++o) {
      if (o == c) continue;
      for (const auto* v : members[o]) {
        bool extends = true;
        for (const auto* x : members[c])
          if (dist(v, x) > epsilon1) {
            extends = false;
            break;
          }
        if (extends) {
          report.fail("condition 2: cluster " + std::to_string(c) + " stays within epsilon1 after adding user " +
                      std::to_string(v->user));
        }
      }
    }
  }

  for (std::size_t c = 0; c < members.size(); ++c)
    for (std::size_t o = c + 1; o < members.size(); ++o)
      for (const auto* a : members[c])
        for (const auto* b : members[o])
          if (dist(a, b) < epsilon2) {
            std::ostringstream msg;
            msg << "condition 3: users " << a->user << " and " << b->user << " in clusters " << c << "/" << o
                << " are only " << dist(a, b) << " apart";
            report.fail(msg.str());
          }
  return report;
}

}  // namespace sere
