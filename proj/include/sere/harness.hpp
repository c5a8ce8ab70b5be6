#pragma once

#include "sere/environment.hpp"
#include "sere/policy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sere {

enum class Algorithm { club_n, mcnb_lite };
enum class EnvKind { piecewise, perturbed, dataset };

std::string to_string(Algorithm a);
std::string to_string(EnvKind e);
Algorithm parse_algorithm(const std::string& s);
EnvKind parse_env(const std::string& s);

struct EnvConfig {
  EnvKind kind = EnvKind::perturbed;
  std::size_t n_users = 10;
  std::size_t dim = 8;
  std::size_t arms = 10;
  std::size_t n_groups = 3;
  double group_spread = 0.3;
  double noise_sigma = 0.05;
  RewardFamily family = RewardFamily::cosine;
  std::uint64_t change_every = 2000;  // piecewise: a new piece every this many rounds (0 = stationary)
  std::uint64_t period = 200;         // perturbed: rounds between perturbations
  double sigma = 0.1;                 // perturbed: feature noise std
  std::string dataset_path;           // ratings file, or a cache written by `ingest`
  IngestOptions ingest;
};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::club_n;
  std::uint64_t rounds = 10000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  PolicyConfig policy;
  EnvConfig env;
  std::uint64_t delta_every = 25;   // last-layer delta sampling period
  std::uint64_t band_every = 100;   // confidence-band checkpoint period
  std::string output_dir = "sere_out";

  /// Throws std::invalid_argument with a readable message on any violation.
  void validate() const;
};

/// Defaults tuned for the desk-scale perturbed environment.
ExperimentConfig default_config();

/// Applies the keys present in `j` on top of `base`. Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = default_config());
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = default_config());

struct RoundRow {
  std::uint64_t t = 0;
  UserId user = 0;
  std::size_t arm = 0;
  double predicted = 0;
  double reward = 0;
  double regret = 0;
  double cum_regret = 0;
  double pha = 0;
  double pha_min = 0;
  double deviation = 0;
  double rho = 0;
  bool drift = false;
  std::size_t resets = 0;
  std::size_t clusters = 0;
  std::size_t cluster_size = 0;
  double round_ms = 0;
  double sere_ms = 0;
};

struct ResetRow {
  std::uint64_t t = 0;
  UserId learner = 0;
  bool cluster = false;
  std::size_t layer = 0;
  std::size_t unit = 0;
};

struct DeltaSample {
  std::uint64_t t = 0;
  UserId user = 0;
  double delta = 0;
};

struct RunLog {
  std::uint64_t seed = 0;
  std::vector<RoundRow> rows;
  std::vector<ResetRow> resets;
  std::vector<DeltaSample> deltas;
  std::uint64_t detections = 0;
};

struct ReinitStats {
  std::uint64_t rounds = 0;
  std::uint64_t rounds_with_reset = 0;
  std::uint64_t total_resets = 0;
  double fraction = 0;
  // Gaps between consecutive rounds that had a reset; absent with fewer than two.
  std::optional<double> mean_interval;
  std::optional<std::uint64_t> min_interval;
  std::optional<std::uint64_t> max_interval;
};

/// `reset_rounds` lists the round of every reset event (duplicates allowed, any order).
ReinitStats compute_reinit_stats(std::span<const std::uint64_t> reset_rounds, std::uint64_t total_rounds);
ReinitStats compute_reinit_stats(const RunLog& log);

struct RunSummary {
  std::uint64_t seed = 0;
  double avg_regret = 0;
  double cum_regret = 0;
  double first_half_regret = 0;
  double second_half_regret = 0;
  ReinitStats reinit;
  double mean_round_ms = 0;
  double mean_sere_ms = 0;
  double overhead = 0;  // mean_sere_ms / mean_round_ms
  double median_delta = 0;
  std::uint64_t detections = 0;
};

RunSummary summarize(const RunLog& log);

struct BandPoint {
  std::uint64_t t = 0;
  double mean = 0;
  double lo = 0;
  double hi = 0;
};

struct Aggregate {
  double mean_avg_regret = 0;
  double std_avg_regret = 0;
  std::vector<BandPoint> band;
};

/// mean +- std of per-seed average regret, and a 95% band of cumulative regret.
Aggregate aggregate_runs(std::span<const RunLog> runs, std::uint64_t band_every);

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunLog> runs;
  std::vector<RunSummary> summaries;
  Aggregate aggregate;
};

/// One seed end to end. `dataset` is required for the dataset environment.
RunLog run_single(const ExperimentConfig& config, std::uint64_t seed, const RatingsDataset* dataset = nullptr);
ExperimentResult run_experiment(const ExperimentConfig& config,
                                 std::shared_ptr<const RatingsDataset> dataset = nullptr);

/// Loads a dataset cache (.json) or ingests a ratings file.
std::shared_ptr<const RatingsDataset> load_any_dataset(const EnvConfig& env);

struct PairedTest {
  std::size_t n = 0;
  double mean_diff = 0;  // mean of a - b
  double t_stat = 0;
  double p_value = 1;    // two-sided
};

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

/// Baseline (SeRe off) and SeRe variants of one configuration over the same seeds.
struct Comparison {
  ExperimentResult baseline;
  ExperimentResult sere;
  PairedTest test;  // baseline minus sere, per-seed average regret
};

Comparison compare_variants(const ExperimentConfig& config, std::shared_ptr<const RatingsDataset> dataset = nullptr);

struct GridRanges {
  std::vector<double> rho_min;
  std::vector<double> rho_max;
  std::vector<double> offset;
  std::vector<double> threshold;
  std::vector<double> scale;
  std::vector<double> eta;
  std::vector<std::uint64_t> maturity;
  std::vector<double> beta;  // applied to both exploration coefficients
  // Inside the documented ranges scale * threshold never exceeds rho_max - rho_min,
  // so exercising the infeasible-point path needs this off.
  bool enforce_bounds = true;

  /// Rejects values outside the documented tuning ranges.
  void validate() const;
};

GridRanges grid_from_json(const nlohmann::json& j);

struct GridPoint {
  double rho_min = 0, rho_max = 0, offset = 0, threshold = 0, scale = 0, eta = 0;
  std::uint64_t maturity = 0;
  double beta = 0;
  bool feasible = true;
  double mean_avg_regret = 0;
  double std_avg_regret = 0;
};

struct GridResult {
  std::vector<GridPoint> table;
  std::size_t best_index = 0;
  std::size_t skipped = 0;
  ExperimentConfig best;
};

/// Cartesian sweep; points violating scale * threshold <= rho_max - rho_min are skipped.
GridResult grid_search(const ExperimentConfig& base, const GridRanges& ranges,
                       std::shared_ptr<const RatingsDataset> dataset = nullptr);

struct SensitivityRow {
  std::string parameter;  // "baseline", "eta" or "maturity"
  double value = 0;
  double mean_avg_regret = 0;
  double std_avg_regret = 0;
  double mean_cum_regret = 0;
};

/// One-factor sweeps over eta and maturity plus the SeRe-off baseline.
std::vector<SensitivityRow> sensitivity_sweep(const ExperimentConfig& base, std::span<const double> etas,
                                              std::span<const std::uint64_t> maturities,
                                              std::shared_ptr<const RatingsDataset> dataset = nullptr);

// Output writers. The per-round CSV carries no wall-clock columns so equal
// (config, seed) pairs give byte-identical files; timing goes to its own CSV.
void write_rounds_csv(std::ostream& out, const RunLog& log);
void write_resets_csv(std::ostream& out, const RunLog& log);
void write_deltas_csv(std::ostream& out, const RunLog& log);
void write_timing_csv(std::ostream& out, const RunLog& log);
void write_band_csv(std::ostream& out, const Aggregate& agg);
void write_grid_csv(std::ostream& out, const GridResult& grid);
void write_sensitivity_csv(std::ostream& out, std::span<const SensitivityRow> rows);
nlohmann::json summary_json(const ExperimentResult& result);
nlohmann::json comparison_json(const Comparison& cmp);

/// Writes every CSV and summary.json for `result` under `dir` (created if needed).
void write_experiment(const ExperimentResult& result, const std::string& dir);

/// Output directory: explicit value, else $SERE_OUT_DIR, else the config's.
std::string resolve_output_dir(const std::string& cli_value, const ExperimentConfig& config);

}  // namespace sere
