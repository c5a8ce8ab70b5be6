// sere_cli: run clustering-of-neural-bandits experiments with optional selective reinitialization.
//
//   sere_cli run     [--config f] [--algo club_n|mcnb_lite] [--env perturbed] [--rounds T] [--seeds 1,2,3] [--sere on|off] [--out dir]
//   sere_cli compare ...          baseline vs SeRe over the same seeds, paired t-test
//   sere_cli grid    --grid g.json ...
//   sere_cli sweep   ...          eta / maturity sensitivity table
//   sere_cli ingest  --ratings file --cache out.json
//   sere_cli print-config ...

#include "sere/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

struct Overrides {
  std::string config;
  std::string algo;
  std::string env;
  std::optional<std::uint64_t> rounds;
  std::vector<std::uint64_t> seeds;
  std::string sere;
  std::string out;
  std::string dataset;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--algo", o.algo, "club_n or mcnb_lite");
  cmd->add_option("--env", o.env, "piecewise, perturbed or dataset");
  cmd->add_option("--rounds", o.rounds, "horizon T");
  cmd->add_option("--seeds", o.seeds, "seed list")->delimiter(',');
  cmd->add_option("--sere", o.sere, "on or off");
  cmd->add_option("--out", o.out, "output directory (else $SERE_OUT_DIR, else config)");
  cmd->add_option("--dataset", o.dataset, "ratings file or dataset cache");
}

sere::ExperimentConfig resolve(const Overrides& o) {
  auto c = o.config.empty() ? sere::default_config() : sere::load_config(o.config);
  if (!o.algo.empty()) c.algorithm = sere::parse_algorithm(o.algo);
  c.policy.clustering =
      c.algorithm == sere::Algorithm::club_n ? sere::ClusteringStrategy::club : sere::ClusteringStrategy::mcnb;
  if (!o.env.empty()) c.env.kind = sere::parse_env(o.env);
  if (o.rounds) c.rounds = *o.rounds;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.sere == "on")
    c.policy.sere_enabled = true;
  else if (o.sere == "off")
    c.policy.sere_enabled = false;
  else if (!o.sere.empty())
    throw std::invalid_argument("--sere expects on or off");
  if (!o.dataset.empty()) c.env.dataset_path = o.dataset;
  c.output_dir = sere::resolve_output_dir(o.out, c);
  c.validate();
  return c;
}

std::ofstream open_file(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void print_summary(const std::string& label, const sere::ExperimentResult& r) {
  std::cout << label << ": avg regret " << r.aggregate.mean_avg_regret << " +- " << r.aggregate.std_avg_regret
            << " over " << r.runs.size() << " seed(s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective reinitialization for clustering of neural bandits"};
  app.require_subcommand(1);

  Overrides run_o, cmp_o, grid_o, sweep_o, print_o;
  auto* run = app.add_subcommand("run", "run one variant over all seeds");
  add_common(run, run_o);
  auto* cmp = app.add_subcommand("compare", "baseline vs SeRe with a paired t-test");
  add_common(cmp, cmp_o);
  std::string grid_file;
  auto* grid = app.add_subcommand("grid", "grid search over detector and utility parameters");
  add_common(grid, grid_o);
  grid->add_option("--grid", grid_file, "JSON file with value lists per parameter")->required();
  std::vector<double> etas{0.1, 0.5, 0.9};
  std::vector<std::uint64_t> maturities{50, 100, 200};
  auto* sweep = app.add_subcommand("sweep", "eta and maturity sensitivity");
  add_common(sweep, sweep_o);
  sweep->add_option("--eta", etas, "decay values")->delimiter(',');
  sweep->add_option("--maturity", maturities, "maturity thresholds")->delimiter(',');
  std::string ratings, cache;
  std::size_t rank = 10, groups = 50;
  auto* ingest = app.add_subcommand("ingest", "build a dataset cache from a ratings file");
  ingest->add_option("--ratings", ratings, "user,item,rating file")->required();
  ingest->add_option("--cache", cache, "output JSON cache")->required();
  ingest->add_option("--rank", rank, "SVD rank per side");
  ingest->add_option("--groups", groups, "k-means groups");
  auto* print = app.add_subcommand("print-config", "print the resolved configuration");
  add_common(print, print_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto c = resolve(run_o);
      const auto r = sere::run_experiment(c);
      sere::write_experiment(r, c.output_dir);
      print_summary(c.policy.sere_enabled ? "sere" : "baseline", r);
    } else if (*cmp) {
      const auto c = resolve(cmp_o);
      const auto r = sere::compare_variants(c);
      sere::write_experiment(r.baseline, c.output_dir + "/baseline");
      sere::write_experiment(r.sere, c.output_dir + "/sere");
      auto f = open_file(std::filesystem::path(c.output_dir) / "comparison.json");
      f << sere::comparison_json(r).dump(2) << '\n';
      print_summary("baseline", r.baseline);
      print_summary("sere", r.sere);
      std::cout << "paired t = " << r.test.t_stat << ", p = " << r.test.p_value << '\n';
    } else if (*grid) {
      const auto c = resolve(grid_o);
      std::ifstream in(grid_file);
      if (!in) throw std::invalid_argument("cannot read grid file: " + grid_file);
      const auto ranges = sere::grid_from_json(nlohmann::json::parse(in, nullptr, true, true));
      const auto g = sere::grid_search(c, ranges);
      auto f = open_file(std::filesystem::path(c.output_dir) / "grid.csv");
      sere::write_grid_csv(f, g);
      auto b = open_file(std::filesystem::path(c.output_dir) / "best_config.json");
      b << sere::config_to_json(g.best).dump(2) << '\n';
      std::cout << "evaluated " << g.table.size() - g.skipped << " point(s), skipped " << g.skipped
                << " infeasible; best avg regret " << g.table[g.best_index].mean_avg_regret << '\n';
    } else if (*sweep) {
      const auto c = resolve(sweep_o);
      const auto rows = sere::sensitivity_sweep(c, etas, maturities);
      auto f = open_file(std::filesystem::path(c.output_dir) / "sensitivity.csv");
      sere::write_sensitivity_csv(f, rows);
      sere::write_sensitivity_csv(std::cout, rows);
    } else if (*ingest) {
      sere::IngestOptions opt;
      opt.rank = rank;
      opt.n_groups = groups;
      const auto data = sere::ingest_ratings(ratings, opt);
      sere::save_dataset(data, cache);
      std::cout << "users " << data.user_features.rows() << ", items " << data.item_features.rows() << ", excluded "
                << data.excluded_users << ", groups " << data.non_empty_groups() << '\n';
    } else if (*print) {
      std::cout << sere::config_to_json(resolve(print_o)).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
