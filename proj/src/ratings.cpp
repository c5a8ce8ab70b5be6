#include "sere/environment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sere {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == '\t' || c == ' ' || c == ';' || c == ':') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool parse_number(const std::string& s, double& v) {
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

// Indices of the `top` keys with the most entries; ties broken by smaller key.
std::vector<std::int64_t> top_by_count(const std::unordered_map<std::int64_t, std::size_t>& counts, std::size_t top) {
  std::vector<std::pair<std::int64_t, std::size_t>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (v.size() > top) v.resize(top);
  std::vector<std::int64_t> keys;
  keys.reserve(v.size());
  for (const auto& [k, _] : v) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
}

}  // namespace

std::vector<RatingTriple> read_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ratings file: " + path);
  std::vector<RatingTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    double u = 0, i = 0, r = 0;
    if (f.size() < 3 || !parse_number(f[0], u) || !parse_number(f[1], i) || !parse_number(f[2], r)) {
      if (out.empty() && line_no == 1) continue;  // header
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed rating record");
    }
    out.push_back({static_cast<std::int64_t>(u), static_cast<std::int64_t>(i), r});
  }
  return out;
}

TruncatedSvd truncated_svd(const Eigen::SparseMatrix<double>& a, std::size_t rank, std::uint64_t seed) {
  const auto m = a.rows();
  const auto n = a.cols();
  if (m == 0 || n == 0) throw std::invalid_argument("truncated_svd: empty matrix");
  const auto r = std::min<Eigen::Index>(static_cast<Eigen::Index>(rank), std::min(m, n));
  const auto l = std::min<Eigen::Index>(r + 10, std::min(m, n));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd omega(n, l);
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = n01(rng);

  Eigen::MatrixXd q = thin_q(a * omega);
  for (int it = 0; it < 6; ++it) {
    Eigen::MatrixXd z = thin_q(a.transpose() * q);
    q = thin_q(a * z);
  }
  Eigen::MatrixXd bt = a.transpose() * q;  // n x l, equals B^T
  Eigen::BDCSVD<Eigen::MatrixXd> svd(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.s = svd.singularValues().head(r);
  out.v = svd.matrixU().leftCols(r);
  out.u = q * svd.matrixV().leftCols(r);
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0) throw std::invalid_argument("kmeans: no points");
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  k = std::min(k, n);
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids.resize(static_cast<Eigen::Index>(k), points.cols());

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  res.centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        target -= d2[pick];
        if (target < 0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    res.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
  }

  res.labels.assign(n, -1);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(res.centroids.rows(), res.centroids.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(res.labels[i])];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) res.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
  }
  return res;
}

std::size_t RatingsDataset::non_empty_groups() const {
  return static_cast<std::size_t>(std::count_if(groups.begin(), groups.end(), [](const auto& g) { return !g.empty(); }));
}

RatingsDataset build_dataset(const std::vector<RatingTriple>& triples, const IngestOptions& options) {
  if (triples.empty()) throw std::invalid_argument("no ratings to ingest");
  if (options.rank == 0) throw std::invalid_argument("SVD rank must be positive");
  std::unordered_map<std::int64_t, std::size_t> user_counts, item_counts;
  for (const auto& t : triples) {
    ++user_counts[t.user];
    ++item_counts[t.item];
  }
  RatingsDataset data;
  data.user_ids = top_by_count(user_counts, options.top_users);
  data.item_ids = top_by_count(item_counts, options.top_items);
  std::unordered_map<std::int64_t, std::uint32_t> user_index, item_index;
  for (std::size_t i = 0; i < data.user_ids.size(); ++i) user_index[data.user_ids[i]] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < data.item_ids.size(); ++i) item_index[data.item_ids[i]] = static_cast<std::uint32_t>(i);

  const auto nu = static_cast<Eigen::Index>(data.user_ids.size());
  const auto ni = static_cast<Eigen::Index>(data.item_ids.size());
  std::vector<Eigen::Triplet<double>> entries;
  for (const auto& t : triples) {
    auto u = user_index.find(t.user);
    auto i = item_index.find(t.item);
    if (u == user_index.end() || i == item_index.end()) continue;
    entries.emplace_back(u->second, i->second, t.rating);
  }
  Eigen::SparseMatrix<double> mat(nu, ni);
  mat.setFromTriplets(entries.begin(), entries.end(), [](double, double b) { return b; });
  mat.makeCompressed();

  const auto svd = truncated_svd(mat, options.rank, options.seed);
  const auto r = static_cast<Eigen::Index>(options.rank);
  const Eigen::VectorXd root = svd.s.cwiseSqrt();
  data.user_features = Eigen::MatrixXd::Zero(nu, r);
  data.item_features = Eigen::MatrixXd::Zero(ni, r);
  data.user_features.leftCols(root.size()) = svd.u * root.asDiagonal();
  data.item_features.leftCols(root.size()) = svd.v * root.asDiagonal();
  normalize_rows(data.user_features);
  normalize_rows(data.item_features);

  data.positives.assign(static_cast<std::size_t>(nu), {});
  data.negatives.assign(static_cast<std::size_t>(nu), {});
  for (Eigen::Index u = 0; u < mat.outerSize(); ++u)
    for (Eigen::SparseMatrix<double>::InnerIterator it(mat, u); it; ++it) {
      auto& bucket = it.value() > options.positive_threshold ? data.positives : data.negatives;
      bucket[static_cast<std::size_t>(it.row())].push_back(static_cast<std::uint32_t>(it.col()));
    }
  for (auto& p : data.positives) std::sort(p.begin(), p.end());
  for (auto& n : data.negatives) std::sort(n.begin(), n.end());

  std::vector<std::uint32_t> eligible;
  std::size_t no_positive = 0, few_negative = 0;
  for (std::uint32_t u = 0; u < static_cast<std::uint32_t>(nu); ++u) {
    if (data.positives[u].empty()) {
      ++no_positive;
    } else if (data.negatives[u].size() < options.min_negatives) {
      ++few_negative;
    } else {
      eligible.push_back(u);
    }
  }
  data.excluded_users = no_positive + few_negative;
  if (data.excluded_users > 0)
    std::clog << "ingest: excluded " << no_positive << " users without positives and " << few_negative
              << " users with fewer than " << options.min_negatives << " negatives\n";
  if (eligible.empty()) throw std::runtime_error("ingest: no user has both positive and enough negative ratings");

  Eigen::MatrixXd pts(static_cast<Eigen::Index>(eligible.size()), r);
  for (std::size_t i = 0; i < eligible.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = data.user_features.row(eligible[i]);
  const auto km = kmeans(pts, options.n_groups, options.seed, options.kmeans_iterations);
  data.user_group.assign(static_cast<std::size_t>(nu), -1);
  data.groups.assign(static_cast<std::size_t>(km.centroids.rows()), {});
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    data.user_group[eligible[i]] = km.labels[i];
    data.groups[static_cast<std::size_t>(km.labels[i])].push_back(eligible[i]);
  }
  return data;
}

RatingsDataset ingest_ratings(const std::string& path, const IngestOptions& options) {
  return build_dataset(read_ratings(path), options);
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw std::runtime_error("dataset cache: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

// Cache layout: a JSON object {format, rank, user_ids, item_ids, user_features,
// item_features, positives, negatives, user_group, groups, excluded_users}.
void save_dataset(const RatingsDataset& data, const std::string& path) {
  nlohmann::json j;
  j["format"] = "sere-dataset-v1";
  j["rank"] = data.user_features.cols();
  j["user_ids"] = data.user_ids;
  j["item_ids"] = data.item_ids;
  j["user_features"] = matrix_to_json(data.user_features);
  j["item_features"] = matrix_to_json(data.item_features);
  j["positives"] = data.positives;
  j["negatives"] = data.negatives;
  j["user_group"] = data.user_group;
  j["groups"] = data.groups;
  j["excluded_users"] = data.excluded_users;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset cache: " + path);
  out << j.dump() << '\n';
}

RatingsDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset cache: " + path);
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "sere-dataset-v1") throw std::runtime_error("dataset cache: unknown format");
  RatingsDataset data;
  const auto rank = j.at("rank").get<Eigen::Index>();
  data.user_ids = j.at("user_ids").get<std::vector<std::int64_t>>();
  data.item_ids = j.at("item_ids").get<std::vector<std::int64_t>>();
  data.user_features = matrix_from_json(j.at("user_features"), rank);
  data.item_features = matrix_from_json(j.at("item_features"), rank);
  data.positives = j.at("positives").get<std::vector<std::vector<std::uint32_t>>>();
  data.negatives = j.at("negatives").get<std::vector<std::vector<std::uint32_t>>>();
  data.user_group = j.at("user_group").get<std::vector<int>>();
  data.groups = j.at("groups").get<std::vector<std::vector<std::uint32_t>>>();
  data.excluded_users = j.at("excluded_users").get<std::size_t>();
  return data;
}

DatasetRound sample_round(const RatingsDataset& data, std::mt19937_64& rng, std::size_t arms) {
  if (arms < 2) throw std::invalid_argument("sample_round: need at least two arms");
  std::vector<std::size_t> live;
  for (std::size_t g = 0; g < data.groups.size(); ++g)
    if (!data.groups[g].empty()) live.push_back(g);
  if (live.empty()) throw std::runtime_error("sample_round: dataset has no eligible users");
  const std::size_t need = arms - 1;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::size_t g = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng)];
    const auto& members = data.groups[g];
    const std::uint32_t u = members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];
    const auto& pos = data.positives[u];
    const auto& neg = data.negatives[u];
    if (pos.empty() || neg.size() < need) continue;  // ineligible, resample

    std::vector<std::uint32_t> items;
    items.push_back(pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)]);
    std::vector<std::uint32_t> pool = neg;
    for (std::size_t k = 0; k < need; ++k) {
      const auto j = std::uniform_int_distribution<std::size_t>(k, pool.size() - 1)(rng);
      std::swap(pool[k], pool[j]);
      items.push_back(pool[k]);
    }
    std::vector<double> rewards(arms, 0.0);
    rewards[0] = 1.0;
    std::vector<std::size_t> order(arms);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    DatasetRound round;
    round.user = u;
    round.group = g;
    const auto du = data.user_features.cols();
    const auto di = data.item_features.cols();
    round.arms.resize(du + di, static_cast<Eigen::Index>(arms));
    round.rewards.resize(arms);
    for (std::size_t slot = 0; slot < arms; ++slot) {
      const auto src = order[slot];
      round.arms.col(static_cast<Eigen::Index>(slot)).head(du) = data.user_features.row(u).transpose();
      round.arms.col(static_cast<Eigen::Index>(slot)).tail(di) = data.item_features.row(items[src]).transpose();
      round.rewards[slot] = rewards[src];
    }
    return round;
  }
  throw std::runtime_error("sample_round: could not find an eligible user");
}

DatasetEnvironment::DatasetEnvironment(const RatingsDataset& data, std::uint64_t horizon, std::uint64_t seed,
                                       std::size_t arms)
    : data_(&data), horizon_(horizon), arms_(arms), rng_(seed) {}

std::optional<RoundInput> DatasetEnvironment::next() {
  if (t_ >= horizon_) return std::nullopt;
  ++t_;
  current_ = sample_round(*data_, rng_, arms_);
  return RoundInput{t_, current_.user, current_.arms};
}

double DatasetEnvironment::play(std::size_t arm) { return current_.rewards.at(arm); }

double DatasetEnvironment::regret(std::size_t arm) const {
  const double best = *std::max_element(current_.rewards.begin(), current_.rewards.end());
  return best - current_.rewards.at(arm);
}

}  // namespace sere
