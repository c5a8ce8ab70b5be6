#include "sere/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace sere {

namespace {

constexpr const char* kHeader = "# sere-metrics v1";

void prepare(std::ostream& out) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << kHeader << '\n';
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

nlohmann::json reinit_json(const ReinitStats& r) {
  nlohmann::json j{{"rounds", r.rounds},
                   {"rounds_with_reset", r.rounds_with_reset},
                   {"total_resets", r.total_resets},
                   {"fraction", r.fraction}};
  j["mean_interval"] = r.mean_interval ? nlohmann::json(*r.mean_interval) : nlohmann::json(nullptr);
  j["min_interval"] = r.min_interval ? nlohmann::json(*r.min_interval) : nlohmann::json(nullptr);
  j["max_interval"] = r.max_interval ? nlohmann::json(*r.max_interval) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

void write_rounds_csv(std::ostream& out, const RunLog& log) {
  prepare(out);
  out << "t,user,arm,predicted,reward,regret,cum_regret,pha,pha_min,deviation,rho,drift,resets,clusters,"
         "cluster_size\n";
  for (const auto& r : log.rows)
    out << r.t << ',' << r.user << ',' << r.arm << ',' << r.predicted << ',' << r.reward << ',' << r.regret << ','
        << r.cum_regret << ',' << r.pha << ',' << r.pha_min << ',' << r.deviation << ',' << r.rho << ','
        << (r.drift ? 1 : 0) << ',' << r.resets << ',' << r.clusters << ',' << r.cluster_size << '\n';
}

void write_resets_csv(std::ostream& out, const RunLog& log) {
  prepare(out);
  out << "t,learner,cluster,layer,unit\n";
  for (const auto& r : log.resets)
    out << r.t << ',' << r.learner << ',' << (r.cluster ? 1 : 0) << ',' << r.layer << ',' << r.unit << '\n';
}

void write_deltas_csv(std::ostream& out, const RunLog& log) {
  prepare(out);
  out << "t,user,last_layer_delta\n";
  for (const auto& d : log.deltas) out << d.t << ',' << d.user << ',' << d.delta << '\n';
}

void write_timing_csv(std::ostream& out, const RunLog& log) {
  prepare(out);
  out << "t,round_ms,sere_ms\n";
  for (const auto& r : log.rows) out << r.t << ',' << r.round_ms << ',' << r.sere_ms << '\n';
}

void write_band_csv(std::ostream& out, const Aggregate& agg) {
  prepare(out);
  out << "t,mean_cum_regret,lo95,hi95\n";
  for (const auto& b : agg.band) out << b.t << ',' << b.mean << ',' << b.lo << ',' << b.hi << '\n';
}

void write_grid_csv(std::ostream& out, const GridResult& grid) {
  prepare(out);
  out << "rho_min,rho_max,delta,lambda_pha,alpha,eta,maturity,beta,feasible,mean_avg_regret,std_avg_regret\n";
  for (const auto& p : grid.table) {
    out << p.rho_min << ',' << p.rho_max << ',' << p.offset << ',' << p.threshold << ',' << p.scale << ',' << p.eta
        << ',' << p.maturity << ',' << p.beta << ',' << (p.feasible ? 1 : 0) << ',';
    if (p.feasible)
      out << p.mean_avg_regret << ',' << p.std_avg_regret;
    else
      out << ',';
    out << '\n';
  }
}

void write_sensitivity_csv(std::ostream& out, std::span<const SensitivityRow> rows) {
  prepare(out);
  out << "parameter,value,mean_avg_regret,std_avg_regret,mean_cum_regret\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << r.value << ',' << r.mean_avg_regret << ',' << r.std_avg_regret << ','
        << r.mean_cum_regret << '\n';
}

nlohmann::json summary_json(const ExperimentResult& result) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : result.summaries)
    seeds.push_back({{"seed", s.seed},
                     {"avg_regret", s.avg_regret},
                     {"cum_regret", s.cum_regret},
                     {"first_half_regret", s.first_half_regret},
                     {"second_half_regret", s.second_half_regret},
                     {"reinit", reinit_json(s.reinit)},
                     {"mean_round_ms", s.mean_round_ms},
                     {"mean_sere_ms", s.mean_sere_ms},
                     {"sere_overhead", s.overhead},
                     {"median_last_layer_delta", s.median_delta},
                     {"drift_detections", s.detections}});
  return {{"config", config_to_json(result.config)},
          {"mean_avg_regret", result.aggregate.mean_avg_regret},
          {"std_avg_regret", result.aggregate.std_avg_regret},
          {"seeds", seeds}};
}

nlohmann::json comparison_json(const Comparison& cmp) {
  return {{"baseline", summary_json(cmp.baseline)},
          {"sere", summary_json(cmp.sere)},
          {"paired_t_test",
           {{"n", cmp.test.n},
            {"mean_diff", cmp.test.mean_diff},
            {"t", cmp.test.t_stat},
            {"p_value", cmp.test.p_value}}}};
}

void write_experiment(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& run : result.runs) {
    const std::string tag = "seed" + std::to_string(run.seed);
    auto rounds = open_out(fs::path(dir) / (tag + "_rounds.csv"));
    write_rounds_csv(rounds, run);
    auto resets = open_out(fs::path(dir) / (tag + "_resets.csv"));
    write_resets_csv(resets, run);
    auto deltas = open_out(fs::path(dir) / (tag + "_deltas.csv"));
    write_deltas_csv(deltas, run);
    auto timing = open_out(fs::path(dir) / (tag + "_timing.csv"));
    write_timing_csv(timing, run);
  }
  auto band = open_out(fs::path(dir) / "band.csv");
  write_band_csv(band, result.aggregate);
  auto summary = open_out(fs::path(dir) / "summary.json");
  summary << summary_json(result).dump(2) << '\n';
}

}  // namespace sere
