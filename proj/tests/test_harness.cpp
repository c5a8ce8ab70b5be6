#include <gtest/gtest.h>

#include "sere/harness.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sere {
namespace {

ExperimentConfig tiny(std::uint64_t rounds = 300) {
  auto c = default_config();
  c.rounds = rounds;
  c.seeds = {1, 2};
  c.policy.hidden = {8, 8};
  c.policy.sere.maturity = 20;
  c.env.n_users = 4;
  return c;
}

std::string rounds_csv(const RunLog& log) {
  std::ostringstream s;
  write_rounds_csv(s, log);
  return s.str();
}

TEST(Config, DefaultsValidate) {
  EXPECT_NO_THROW(default_config().validate());
  EXPECT_EQ(default_config().seeds.size(), 5u);
}

TEST(Config, JsonOverridesAndRoundTrip) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"algorithm":"mcnb_lite","rounds":77,"eta":0.5,
    "hidden":[4,4],"env":"piecewise","seeds":[9]})"));
  EXPECT_EQ(c.algorithm, Algorithm::mcnb_lite);
  EXPECT_EQ(c.policy.clustering, ClusteringStrategy::mcnb);
  EXPECT_EQ(c.rounds, 77u);
  EXPECT_EQ(c.policy.sere.decay, 0.5);
  EXPECT_EQ(c.env.kind, EnvKind::piecewise);
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"roundz":5})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"rounds":0})")).validate(), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"seeds":[]})")).validate(), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"algorithm":"club"})")), std::invalid_argument);
  // 0.02 * 0.7 = 0.014 > 0.05 - 0.04
  EXPECT_THROW(
      config_from_json(nlohmann::json::parse(R"({"alpha":0.02,"lambda_pha":0.7,"rho_min":0.04,"rho_max":0.05})"))
          .validate(),
      std::invalid_argument);
}

TEST(Config, LoadFromFileAllowsComments) {
  const auto p = std::filesystem::temp_directory_path() / "sere_cfg_test.json";
  std::ofstream(p) << "{\n  // short run\n  \"rounds\": 12\n}\n";
  EXPECT_EQ(load_config(p.string()).rounds, 12u);
  std::filesystem::remove(p);
  EXPECT_THROW(load_config("/nonexistent/sere.json"), std::invalid_argument);
}

TEST(Run, SingleRound) {
  const auto log = run_single(tiny(1), 1);
  EXPECT_EQ(log.rows.size(), 1u);
}

TEST(Run, CumulativeRegretIsPrefixSum) {
  for (auto env : {EnvKind::perturbed, EnvKind::piecewise}) {
    auto c = tiny(400);
    c.env.kind = env;
    c.env.change_every = 150;
    const auto log = run_single(c, 3);
    ASSERT_EQ(log.rows.size(), 400u);
    double sum = 0;
    for (const auto& r : log.rows) {
      sum += r.regret;
      EXPECT_NEAR(r.cum_regret, sum, 1e-12);
      EXPECT_GE(r.regret, 0.0);
    }
    EXPECT_NEAR(summarize(log).avg_regret, log.rows.back().cum_regret / 400.0, 1e-12);
  }
}

TEST(Run, LogsAreDeterministic) {
  const auto c = tiny();
  EXPECT_EQ(rounds_csv(run_single(c, 4)), rounds_csv(run_single(c, 4)));
  EXPECT_NE(rounds_csv(run_single(c, 4)), rounds_csv(run_single(c, 5)));
}

TEST(Run, SereOffAndZeroRateMatchBaseline) {
  auto off = tiny();
  off.policy.sere_enabled = false;
  auto zero = tiny();
  zero.policy.detector.rho_min = zero.policy.detector.rho_max = zero.policy.detector.scale = 0.0;
  EXPECT_EQ(rounds_csv(run_single(off, 7)), rounds_csv(run_single(zero, 7)));
}

TEST(Run, DeltaSamplesOnSchedule) {
  const auto log = run_single(tiny(200), 1);
  ASSERT_FALSE(log.deltas.empty());
  for (const auto& d : log.deltas) {
    EXPECT_EQ(d.t % 25, 0u);
    EXPECT_GT(d.delta, 0.0);
  }
}

TEST(ReinitStats, HandCount) {
  const std::vector<std::uint64_t> rounds{10, 20, 30};
  const auto s = compute_reinit_stats(rounds, 100);
  EXPECT_DOUBLE_EQ(s.fraction, 0.03);
  EXPECT_EQ(*s.min_interval, 10u);
  EXPECT_EQ(*s.max_interval, 10u);
  EXPECT_DOUBLE_EQ(*s.mean_interval, 10.0);
}

TEST(ReinitStats, NoResets) {
  const auto s = compute_reinit_stats(std::vector<std::uint64_t>{}, 50);
  EXPECT_EQ(s.fraction, 0.0);
  EXPECT_FALSE(s.mean_interval);
  EXPECT_FALSE(s.min_interval);
}

TEST(ReinitStats, EveryRoundWithDuplicates) {
  std::vector<std::uint64_t> rounds;
  for (std::uint64_t t = 1; t <= 40; ++t) rounds.insert(rounds.end(), {t, t});
  const auto s = compute_reinit_stats(rounds, 40);
  EXPECT_EQ(s.fraction, 1.0);
  EXPECT_EQ(*s.max_interval, 1u);
  EXPECT_EQ(s.total_resets, 80u);
}

TEST(Aggregate, BandFormula) {
  RunLog a, b, c;
  for (auto* l : {&a, &b, &c}) l->rows.resize(2);
  a.rows[1].cum_regret = 1.0;
  b.rows[1].cum_regret = 2.0;
  c.rows[1].cum_regret = 3.0;
  const std::vector<RunLog> runs{a, b, c};
  const auto agg = aggregate_runs(runs, 2);
  ASSERT_EQ(agg.band.size(), 1u);
  EXPECT_EQ(agg.band[0].t, 2u);
  EXPECT_DOUBLE_EQ(agg.band[0].mean, 2.0);
  EXPECT_NEAR(agg.band[0].hi - agg.band[0].mean, 1.96 * 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(PairedTest, ReferenceValues) {
  // differences {.01,.03,.01,.04,.01}: mean .02, sd sqrt(2e-4), t = .02 / (sd / sqrt 5)
  const std::vector<double> a{0.21, 0.25, 0.19, 0.30, 0.22};
  const std::vector<double> b{0.20, 0.22, 0.18, 0.26, 0.21};
  const auto t = paired_t_test(a, b);
  EXPECT_NEAR(t.t_stat, 0.02 / (std::sqrt(2e-4) / std::sqrt(5.0)), 1e-9);
  EXPECT_NEAR(t.p_value, 0.03410942316740957, 1e-9);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}

TEST(Grid, SinglePointIsBest) {
  GridRanges r;
  r.rho_min = {0.01};
  r.rho_max = {0.1};
  const auto g = grid_search(tiny(100), r);
  ASSERT_EQ(g.table.size(), 1u);
  EXPECT_EQ(g.best_index, 0u);
  EXPECT_EQ(g.skipped, 0u);
}

TEST(Grid, InfeasiblePointSkipped) {
  GridRanges r;
  r.scale = {0.02};
  r.threshold = {0.7};
  r.rho_min = {0.04, 0.005};
  r.rho_max = {0.05};
  r.enforce_bounds = false;
  const auto g = grid_search(tiny(100), r);
  EXPECT_EQ(g.skipped, 1u);
  EXPECT_FALSE(g.table[0].feasible);
  EXPECT_EQ(g.best_index, 1u);
}

TEST(Grid, OutOfRangeRejected) {
  GridRanges r;
  r.rho_min = {0.04};
  EXPECT_THROW(grid_search(tiny(10), r), std::invalid_argument);
  GridRanges all_bad;
  all_bad.scale = {0.02};
  all_bad.threshold = {0.7};
  all_bad.rho_min = {0.04};
  all_bad.rho_max = {0.05};
  all_bad.enforce_bounds = false;
  EXPECT_THROW(grid_search(tiny(10), all_bad), std::invalid_argument);
}

TEST(Grid, SelectionMatchesIndependentRuns) {
  auto c = tiny(1000);
  c.seeds = {1};
  GridRanges r;
  r.beta = {0.0, 0.1};
  const auto g = grid_search(c, r);
  std::vector<double> regrets;
  for (double beta : r.beta) {
    auto v = c;
    v.policy.beta_user = v.policy.beta_cluster = beta;
    regrets.push_back(run_experiment(v).aggregate.mean_avg_regret);
  }
  EXPECT_EQ(g.table[0].mean_avg_regret, regrets[0]);
  EXPECT_EQ(g.table[1].mean_avg_regret, regrets[1]);
  EXPECT_EQ(g.best_index, regrets[1] < regrets[0] ? 1u : 0u);
  EXPECT_EQ(g.best.policy.beta_user, r.beta[g.best_index]);
}

TEST(Output, CsvHeaderAndPrecision) {
  const auto log = run_single(tiny(5), 1);
  const auto csv = rounds_csv(log);
  EXPECT_EQ(csv.rfind("# sere-metrics v1\nt,user,arm,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Output, WriteExperimentFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "sere_out_test";
  std::filesystem::remove_all(dir);
  auto c = tiny(50);
  const auto res = run_experiment(c);
  write_experiment(res, dir.string());
  for (const char* f : {"seed1_rounds.csv", "seed2_timing.csv", "band.csv", "summary.json", "seed1_resets.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["seeds"].size(), 2u);
  std::filesystem::remove_all(dir);
}

TEST(Output, DirectoryPrecedence) {
  auto c = tiny();
  c.output_dir = "from_config";
  ::unsetenv("SERE_OUT_DIR");
  EXPECT_EQ(resolve_output_dir("", c), "from_config");
  ::setenv("SERE_OUT_DIR", "from_env", 1);
  EXPECT_EQ(resolve_output_dir("", c), "from_env");
  EXPECT_EQ(resolve_output_dir("from_cli", c), "from_cli");
  ::unsetenv("SERE_OUT_DIR");
}

TEST(Sensitivity, ProducesOneRowPerSetting) {
  const std::vector<double> etas{0.1, 0.9};
  const std::vector<std::uint64_t> ms{50};
  const auto rows = sensitivity_sweep(tiny(100), etas, ms);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].parameter, "baseline");
  EXPECT_EQ(rows[3].parameter, "maturity");
}

#ifdef SERE_CLI_PATH
int cli(const std::string& args) {
  const std::string cmd = std::string(SERE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = std::filesystem::temp_directory_path() / "sere_cli_test";
  EXPECT_EQ(cli("run --rounds 20 --seeds 1 --out " + dir.string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "seed1_rounds.csv"));
  EXPECT_NE(cli("run --rounds 0 --out " + dir.string()), 0);
  EXPECT_NE(cli("run --algo nope --out " + dir.string()), 0);
  EXPECT_NE(cli("run --config /nonexistent.json"), 0);
  std::filesystem::remove_all(dir);
}
#endif

}  // namespace
}  // namespace sere
