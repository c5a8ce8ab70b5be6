#include "sere/harness.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace sere {

std::string to_string(Algorithm a) { return a == Algorithm::club_n ? "club_n" : "mcnb_lite"; }

std::string to_string(EnvKind e) {
  switch (e) {
    case EnvKind::piecewise:
      return "piecewise";
    case EnvKind::perturbed:
      return "perturbed";
    case EnvKind::dataset:
      return "dataset";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "club_n") return Algorithm::club_n;
  if (s == "mcnb_lite") return Algorithm::mcnb_lite;
  throw std::invalid_argument("unknown algorithm '" + s + "' (expected club_n or mcnb_lite)");
}

EnvKind parse_env(const std::string& s) {
  if (s == "piecewise") return EnvKind::piecewise;
  if (s == "perturbed") return EnvKind::perturbed;
  if (s == "dataset") return EnvKind::dataset;
  throw std::invalid_argument("unknown environment '" + s + "' (expected piecewise, perturbed or dataset)");
}

namespace {

RewardFamily parse_family(const std::string& s) {
  if (s == "cosine") return RewardFamily::cosine;
  if (s == "quadratic") return RewardFamily::quadratic;
  throw std::invalid_argument("unknown reward family '" + s + "'");
}

std::string family_name(RewardFamily f) { return f == RewardFamily::cosine ? "cosine" : "quadratic"; }

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.policy.hidden = {16, 16};
  c.policy.sere.maturity = 200;
  c.policy.detector.offset = 0.2;
  c.policy.detector.threshold = 0.7;
  c.policy.detector.scale = 0.005;
  c.policy.detector.rho_min = 0.005;
  c.policy.detector.rho_max = 0.05;
  return c;
}

void ExperimentConfig::validate() const {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (delta_every < 1 || band_every < 1) throw std::invalid_argument("sampling periods must be >= 1");
  policy.validate();
  if (env.arms < 2) throw std::invalid_argument("need at least two arms");
  if (env.kind == EnvKind::dataset && env.dataset_path.empty())
    throw std::invalid_argument("dataset environment requires a dataset path");
  if (env.kind == EnvKind::perturbed && env.period < 1) throw std::invalid_argument("perturbation period must be >= 1");
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> known = {
      "algorithm", "sere", "env", "rounds", "seeds", "hidden", "lr", "beta_user", "beta_cluster", "ridge",
      "epsilon1", "reward_tolerance", "sere_on_clusters", "eta", "maturity", "single_reset_per_step", "delta",
      "lambda_pha", "alpha", "rho_min", "rho_max", "rearm", "reinversion_period", "shared_init", "n_users", "dim",
      "arms", "n_groups", "group_spread", "noise_sigma", "reward_family", "change_every", "period", "sigma",
      "dataset", "svd_rank", "top_users", "top_items", "kmeans_groups", "delta_every", "band_every", "output_dir"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");

  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  if (j.contains("env")) c.env.kind = parse_env(j.at("env").get<std::string>());
  if (j.contains("reward_family")) c.env.family = parse_family(j.at("reward_family").get<std::string>());
  get("sere", c.policy.sere_enabled);
  get("rounds", c.rounds);
  get("seeds", c.seeds);
  get("hidden", c.policy.hidden);
  get("lr", c.policy.lr);
  get("beta_user", c.policy.beta_user);
  get("beta_cluster", c.policy.beta_cluster);
  get("ridge", c.policy.ridge);
  get("epsilon1", c.policy.epsilon1);
  get("reward_tolerance", c.policy.reward_tolerance);
  get("sere_on_clusters", c.policy.sere_on_clusters);
  get("eta", c.policy.sere.decay);
  get("maturity", c.policy.sere.maturity);
  get("single_reset_per_step", c.policy.sere.single_reset_per_step);
  get("delta", c.policy.detector.offset);
  get("lambda_pha", c.policy.detector.threshold);
  get("alpha", c.policy.detector.scale);
  get("rho_min", c.policy.detector.rho_min);
  get("rho_max", c.policy.detector.rho_max);
  get("rearm", c.policy.detector.rearm);
  get("reinversion_period", c.policy.reinversion_period);
  get("shared_init", c.policy.shared_init);
  get("n_users", c.env.n_users);
  get("dim", c.env.dim);
  get("arms", c.env.arms);
  get("n_groups", c.env.n_groups);
  get("group_spread", c.env.group_spread);
  get("noise_sigma", c.env.noise_sigma);
  get("change_every", c.env.change_every);
  get("period", c.env.period);
  get("sigma", c.env.sigma);
  get("dataset", c.env.dataset_path);
  get("svd_rank", c.env.ingest.rank);
  get("top_users", c.env.ingest.top_users);
  get("top_items", c.env.ingest.top_items);
  get("kmeans_groups", c.env.ingest.n_groups);
  get("delta_every", c.delta_every);
  get("band_every", c.band_every);
  get("output_dir", c.output_dir);
  c.policy.clustering = c.algorithm == Algorithm::club_n ? ClusteringStrategy::club : ClusteringStrategy::mcnb;
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& p = c.policy;
  const auto& d = p.detector;
  return {{"algorithm", to_string(c.algorithm)},
          {"sere", p.sere_enabled},
          {"env", to_string(c.env.kind)},
          {"rounds", c.rounds},
          {"seeds", c.seeds},
          {"hidden", p.hidden},
          {"lr", p.lr},
          {"beta_user", p.beta_user},
          {"beta_cluster", p.beta_cluster},
          {"ridge", p.ridge},
          {"epsilon1", p.epsilon1},
          {"reward_tolerance", p.reward_tolerance},
          {"sere_on_clusters", p.sere_on_clusters},
          {"eta", p.sere.decay},
          {"maturity", p.sere.maturity},
          {"single_reset_per_step", p.sere.single_reset_per_step},
          {"delta", d.offset},
          {"lambda_pha", d.threshold},
          {"alpha", d.scale},
          {"rho_min", d.rho_min},
          {"rho_max", d.rho_max},
          {"rearm", d.rearm},
          {"reinversion_period", p.reinversion_period},
          {"shared_init", p.shared_init},
          {"n_users", c.env.n_users},
          {"dim", c.env.dim},
          {"arms", c.env.arms},
          {"n_groups", c.env.n_groups},
          {"group_spread", c.env.group_spread},
          {"noise_sigma", c.env.noise_sigma},
          {"reward_family", family_name(c.env.family)},
          {"change_every", c.env.change_every},
          {"period", c.env.period},
          {"sigma", c.env.sigma},
          {"dataset", c.env.dataset_path},
          {"svd_rank", c.env.ingest.rank},
          {"top_users", c.env.ingest.top_users},
          {"top_items", c.env.ingest.top_items},
          {"kmeans_groups", c.env.ingest.n_groups},
          {"delta_every", c.delta_every},
          {"band_every", c.band_every},
          {"output_dir", c.output_dir}};
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace sere
