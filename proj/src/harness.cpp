#include "sere/harness.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace sere {

namespace {

std::unique_ptr<Environment> make_environment(const ExperimentConfig& c, std::uint64_t seed,
                                              const RatingsDataset* dataset) {
  const auto& e = c.env;
  switch (e.kind) {
    case EnvKind::piecewise: {
      SyntheticEnvSpec s;
      s.n_users = e.n_users;
      s.dim = e.dim;
      s.arms = e.arms;
      s.horizon = c.rounds;
      s.noise_sigma = e.noise_sigma;
      s.family = e.family;
      s.n_groups = e.n_groups;
      s.group_spread = e.group_spread;
      s.seed = derive_seed(seed, 101);
      if (e.change_every > 0)
        for (std::uint64_t tau = e.change_every + 1; tau <= c.rounds; tau += e.change_every) s.change_points.push_back(tau);
      return std::make_unique<PiecewiseEnvironment>(std::move(s));
    }
    case EnvKind::perturbed: {
      PerturbedEnvSpec s;
      s.arms = e.arms;
      s.horizon = c.rounds;
      s.noise_sigma = e.noise_sigma;
      s.family = e.family;
      auto base = make_user_features(e.n_users, e.dim, e.n_groups, e.group_spread, derive_seed(seed, 102));
      return std::make_unique<PerturbedEnvironment>(
          gen_perturbed(std::move(base), e.period, e.sigma, derive_seed(seed, 103), s));
    }
    case EnvKind::dataset:
      if (!dataset) throw std::invalid_argument("dataset environment requires a loaded dataset");
      return std::make_unique<DatasetEnvironment>(*dataset, c.rounds, derive_seed(seed, 104), e.arms);
  }
  throw std::invalid_argument("unknown environment kind");
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

template <typename Fn>
auto parallel_map(std::size_t n, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<void>> jobs;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace

RunLog run_single(const ExperimentConfig& config, std::uint64_t seed, const RatingsDataset* dataset) {
  config.validate();
  PolicyConfig pc = config.policy;
  pc.clustering = config.algorithm == Algorithm::club_n ? ClusteringStrategy::club : ClusteringStrategy::mcnb;
  auto env = make_environment(config, seed, dataset);
  CnbPolicy policy(pc, env->arm_dim(), derive_seed(seed, 201));

  RunLog log;
  log.seed = seed;
  log.rows.reserve(config.rounds);
  std::map<UserId, std::pair<Eigen::MatrixXd, std::uint64_t>> snapshots;
  double cumulative = 0;

  using clock = std::chrono::steady_clock;
  for (;;) {
    const auto start = clock::now();
    auto round = env->next();
    if (!round) break;
    if (!policy.learner(round->user)) {
      const auto& fresh = policy.touch(round->user);
      snapshots.emplace(round->user, std::make_pair(fresh.net.output_weights(), std::uint64_t{0}));
    }
    const auto outcome = policy.play_round(*round, [&](std::size_t arm) { return env->play(arm); });
    const double regret = env->regret(outcome.chosen);
    const auto end = clock::now();

    cumulative += regret;
    RoundRow row;
    row.t = outcome.t;
    row.user = outcome.user;
    row.arm = outcome.chosen;
    row.predicted = outcome.predicted;
    row.reward = outcome.reward;
    row.regret = regret;
    row.cum_regret = cumulative;
    row.pha = outcome.pha;
    row.pha_min = outcome.pha_min;
    row.deviation = outcome.deviation;
    row.rho = outcome.rho;
    row.drift = outcome.drift;
    row.resets = outcome.resets.size();
    row.clusters = outcome.num_clusters;
    row.cluster_size = outcome.cluster_size;
    row.round_ms = std::chrono::duration<double, std::milli>(end - start).count();
    row.sere_ms = outcome.sere_ms;
    log.rows.push_back(row);
    for (const auto& r : outcome.resets)
      log.resets.push_back({outcome.t, r.learner, r.cluster, r.event.layer, r.event.unit});

    if (outcome.t % config.delta_every == 0) {
      for (auto& [user, snap] : snapshots) {
        const auto* l = policy.learner(user);
        if (l->plays == snap.second) continue;
        log.deltas.push_back({outcome.t, user, (l->net.output_weights() - snap.first).norm()});
        snap = {l->net.output_weights(), l->plays};
      }
    }
  }
  log.detections = policy.detector().detections();
  return log;
}

ReinitStats compute_reinit_stats(std::span<const std::uint64_t> reset_rounds, std::uint64_t total_rounds) {
  ReinitStats s;
  s.rounds = total_rounds;
  s.total_resets = reset_rounds.size();
  std::vector<std::uint64_t> rounds(reset_rounds.begin(), reset_rounds.end());
  std::sort(rounds.begin(), rounds.end());
  rounds.erase(std::unique(rounds.begin(), rounds.end()), rounds.end());
  s.rounds_with_reset = rounds.size();
  s.fraction = total_rounds ? static_cast<double>(rounds.size()) / static_cast<double>(total_rounds) : 0.0;
  if (rounds.size() >= 2) {
    std::uint64_t lo = rounds[1] - rounds[0], hi = lo;
    for (std::size_t i = 1; i < rounds.size(); ++i) {
      lo = std::min(lo, rounds[i] - rounds[i - 1]);
      hi = std::max(hi, rounds[i] - rounds[i - 1]);
    }
    s.min_interval = lo;
    s.max_interval = hi;
    s.mean_interval = static_cast<double>(rounds.back() - rounds.front()) / static_cast<double>(rounds.size() - 1);
  }
  return s;
}

ReinitStats compute_reinit_stats(const RunLog& log) {
  std::vector<std::uint64_t> rounds;
  rounds.reserve(log.resets.size());
  for (const auto& r : log.resets) rounds.push_back(r.t);
  return compute_reinit_stats(rounds, log.rows.size());
}

RunSummary summarize(const RunLog& log) {
  RunSummary s;
  s.seed = log.seed;
  const auto n = log.rows.size();
  if (n == 0) return s;
  s.cum_regret = log.rows.back().cum_regret;
  s.avg_regret = s.cum_regret / static_cast<double>(n);
  const auto half = n / 2;
  s.first_half_regret = half ? log.rows[half - 1].cum_regret : 0.0;
  s.second_half_regret = s.cum_regret - s.first_half_regret;
  s.reinit = compute_reinit_stats(log);
  double round_ms = 0, sere_ms = 0;
  for (const auto& r : log.rows) {
    round_ms += r.round_ms;
    sere_ms += r.sere_ms;
  }
  s.mean_round_ms = round_ms / static_cast<double>(n);
  s.mean_sere_ms = sere_ms / static_cast<double>(n);
  s.overhead = s.mean_round_ms > 0 ? s.mean_sere_ms / s.mean_round_ms : 0.0;
  std::vector<double> deltas;
  for (const auto& d : log.deltas) deltas.push_back(d.delta);
  s.median_delta = median(std::move(deltas));
  s.detections = log.detections;
  return s;
}

Aggregate aggregate_runs(std::span<const RunLog> runs, std::uint64_t band_every) {
  Aggregate agg;
  if (runs.empty()) return agg;
  std::vector<double> avgs;
  for (const auto& r : runs) avgs.push_back(summarize(r).avg_regret);
  agg.mean_avg_regret = mean(avgs);
  agg.std_avg_regret = sample_std(avgs);
  std::size_t horizon = runs.front().rows.size();
  for (const auto& r : runs) horizon = std::min(horizon, r.rows.size());
  std::vector<double> at(runs.size());
  for (std::size_t t = 1; t <= horizon; ++t) {
    if (t % band_every != 0 && t != horizon) continue;
    for (std::size_t i = 0; i < runs.size(); ++i) at[i] = runs[i].rows[t - 1].cum_regret;
    const double m = mean(at);
    const double half_width = runs.size() > 1 ? 1.96 * sample_std(at) / std::sqrt(static_cast<double>(runs.size())) : 0.0;
    agg.band.push_back({t, m, m - half_width, m + half_width});
  }
  return agg;
}

std::shared_ptr<const RatingsDataset> load_any_dataset(const EnvConfig& env) {
  const auto& p = env.dataset_path;
  if (p.size() >= 5 && p.substr(p.size() - 5) == ".json") return std::make_shared<RatingsDataset>(load_dataset(p));
  return std::make_shared<RatingsDataset>(ingest_ratings(p, env.ingest));
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::shared_ptr<const RatingsDataset> dataset) {
  config.validate();
  if (config.env.kind == EnvKind::dataset && !dataset) dataset = load_any_dataset(config.env);
  ExperimentResult res;
  res.config = config;
  res.runs = parallel_map(config.seeds.size(),
                          [&](std::size_t i) { return run_single(config, config.seeds[i], dataset.get()); });
  for (const auto& r : res.runs) res.summaries.push_back(summarize(r));
  res.aggregate = aggregate_runs(res.runs, config.band_every);
  return res;
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: samples differ in length");
  PairedTest t;
  t.n = a.size();
  if (t.n < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  std::vector<double> d(t.n);
  for (std::size_t i = 0; i < t.n; ++i) d[i] = a[i] - b[i];
  t.mean_diff = mean(d);
  const double sd = sample_std(d);
  if (sd == 0.0) {
    t.t_stat = t.mean_diff == 0.0 ? 0.0 : std::copysign(INFINITY, t.mean_diff);
    t.p_value = t.mean_diff == 0.0 ? 1.0 : 0.0;
    return t;
  }
  t.t_stat = t.mean_diff / (sd / std::sqrt(static_cast<double>(t.n)));
  boost::math::students_t dist(static_cast<double>(t.n - 1));
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t_stat)));
  return t;
}

Comparison compare_variants(const ExperimentConfig& config, std::shared_ptr<const RatingsDataset> dataset) {
  if (config.env.kind == EnvKind::dataset && !dataset) dataset = load_any_dataset(config.env);
  ExperimentConfig off = config, on = config;
  off.policy.sere_enabled = false;
  on.policy.sere_enabled = true;
  Comparison cmp;
  cmp.baseline = run_experiment(off, dataset);
  cmp.sere = run_experiment(on, dataset);
  std::vector<double> a, b;
  for (const auto& s : cmp.baseline.summaries) a.push_back(s.avg_regret);
  for (const auto& s : cmp.sere.summaries) b.push_back(s.avg_regret);
  if (a.size() >= 2) cmp.test = paired_t_test(a, b);
  return cmp;
}

void GridRanges::validate() const {
  for (auto m : maturity)
    if (m < 1) throw std::invalid_argument("grid maturity must be >= 1");
  for (double e : eta)
    if (e < 0.0 || e > 1.0) throw std::invalid_argument("grid eta must lie in [0, 1]");
  for (double b : beta)
    if (b < 0.0) throw std::invalid_argument("grid beta must be >= 0");
  if (!enforce_bounds) return;
  auto check = [](const char* name, const std::vector<double>& v, double lo, double hi) {
    for (double x : v)
      if (x < lo - 1e-12 || x > hi + 1e-12)
        throw std::invalid_argument(std::string("grid value for ") + name + " outside [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
  };
  check("rho_min", rho_min, 0.005, 0.02);
  check("rho_max", rho_max, 0.05, 0.2);
  check("delta", offset, 0.05, 0.2);
  check("lambda_pha", threshold, 0.3, 0.7);
  check("alpha", scale, 0.005, 0.02);
}

GridRanges grid_from_json(const nlohmann::json& j) {
  GridRanges g;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("rho_min", g.rho_min);
  get("rho_max", g.rho_max);
  get("delta", g.offset);
  get("lambda_pha", g.threshold);
  get("alpha", g.scale);
  get("eta", g.eta);
  get("maturity", g.maturity);
  get("beta", g.beta);
  get("enforce_bounds", g.enforce_bounds);
  return g;
}

GridResult grid_search(const ExperimentConfig& base, const GridRanges& ranges,
                       std::shared_ptr<const RatingsDataset> dataset) {
  ranges.validate();
  if (base.env.kind == EnvKind::dataset && !dataset) dataset = load_any_dataset(base.env);
  const auto& d = base.policy.detector;
  auto or_default = [](const auto& v, auto def) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return v.empty() ? std::vector<T>{static_cast<T>(def)} : v;
  };
  const auto rmin = or_default(ranges.rho_min, d.rho_min);
  const auto rmax = or_default(ranges.rho_max, d.rho_max);
  const auto off = or_default(ranges.offset, d.offset);
  const auto thr = or_default(ranges.threshold, d.threshold);
  const auto sc = or_default(ranges.scale, d.scale);
  const auto eta = or_default(ranges.eta, base.policy.sere.decay);
  const auto mat = or_default(ranges.maturity, base.policy.sere.maturity);
  const auto betas = or_default(ranges.beta, base.policy.beta_user);

  GridResult out;
  std::vector<ExperimentConfig> configs;
  for (double a : rmin)
    for (double b : rmax)
      for (double o : off)
        for (double th : thr)
          for (double s : sc)
            for (double e : eta)
              for (auto m : mat)
                for (double beta : betas) {
                  GridPoint p{a, b, o, th, s, e, m, beta};
                  ExperimentConfig c = base;
                  c.policy.sere_enabled = true;
                  c.policy.detector = {o, th, s, a, b, d.rearm};
                  c.policy.sere.decay = e;
                  c.policy.sere.maturity = m;
                  if (!ranges.beta.empty()) c.policy.beta_user = c.policy.beta_cluster = beta;
                  p.feasible = c.policy.detector.rate_bound_holds() && a <= b;
                  if (!p.feasible) ++out.skipped;
                  out.table.push_back(p);
                  configs.push_back(std::move(c));
                }

  bool found = false;
  for (std::size_t i = 0; i < out.table.size(); ++i) {
    auto& p = out.table[i];
    if (!p.feasible) continue;
    const auto res = run_experiment(configs[i], dataset);
    p.mean_avg_regret = res.aggregate.mean_avg_regret;
    p.std_avg_regret = res.aggregate.std_avg_regret;
    if (!found || p.mean_avg_regret < out.table[out.best_index].mean_avg_regret) {
      out.best_index = i;
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("grid search: no feasible configuration");
  out.best = configs[out.best_index];
  return out;
}

std::vector<SensitivityRow> sensitivity_sweep(const ExperimentConfig& base, std::span<const double> etas,
                                              std::span<const std::uint64_t> maturities,
                                              std::shared_ptr<const RatingsDataset> dataset) {
  if (base.env.kind == EnvKind::dataset && !dataset) dataset = load_any_dataset(base.env);
  std::vector<SensitivityRow> rows;
  auto run = [&](const std::string& name, double value, ExperimentConfig c) {
    const auto res = run_experiment(c, dataset);
    std::vector<double> cums;
    for (const auto& s : res.summaries) cums.push_back(s.cum_regret);
    rows.push_back({name, value, res.aggregate.mean_avg_regret, res.aggregate.std_avg_regret, mean(cums)});
  };
  ExperimentConfig off = base;
  off.policy.sere_enabled = false;
  run("baseline", 0.0, off);
  for (double e : etas) {
    ExperimentConfig c = base;
    c.policy.sere_enabled = true;
    c.policy.sere.decay = e;
    run("eta", e, c);
  }
  for (auto m : maturities) {
    ExperimentConfig c = base;
    c.policy.sere_enabled = true;
    c.policy.sere.maturity = m;
    run("maturity", static_cast<double>(m), c);
  }
  return rows;
}

std::string resolve_output_dir(const std::string& cli_value, const ExperimentConfig& config) {
  if (!cli_value.empty()) return cli_value;
  if (const char* env = std::getenv("SERE_OUT_DIR"); env && *env) return env;
  return config.output_dir;
}

}  // namespace sere
