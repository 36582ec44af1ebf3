// randinf: conditional randomization tests from the command line.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "randinf/study.hpp"
#include "randinf/types.hpp"

namespace {

using nlohmann::json;

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> resamples;
};

// command-line flags override the config file only when actually given
randinf::StudyConfig load_config(const std::string& path, const CommonFlags& flags) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw randinf::ConfigError("cannot open config file: " + path);
    in >> j;
  }
  randinf::StudyConfig config = randinf::parse_study_config(j);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.mode) {
    if (*flags.mode == "exact") config.mode = randinf::ModeKind::Exact;
    else if (*flags.mode == "mc") config.mode = randinf::ModeKind::MonteCarlo;
    else throw randinf::ConfigError("--mode must be exact or mc");
  }
  if (flags.resamples) config.resamples = *flags.resamples;
  return config;
}

void emit(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw randinf::ConfigError("cannot open output file: " + out_path);
    out << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional randomization tests: exact and Monte Carlo p-values, "
               "test inversion, and permutation diagnostics"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_path;
  CommonFlags flags;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    if (needs_data) cmd->add_option("--data", data_path, "input CSV")->required();
    cmd->add_option("--config", config_path, "JSON study configuration");
    cmd->add_option("--seed", flags.seed, "random seed");
    cmd->add_option("--mode", flags.mode, "exact|mc");
    cmd->add_option("--resamples", flags.resamples, "Monte Carlo resample count");
    cmd->add_option("--out", out_path, "write the JSON report here instead of stdout");
  };

  auto* cmd_test = app.add_subcommand("test", "run one conditional randomization test");
  add_common(cmd_test, true);

  auto* cmd_invert =
      app.add_subcommand("invert", "confidence interval for a constant effect");
  add_common(cmd_invert, true);

  auto* cmd_quasi = app.add_subcommand(
      "quasi", "permutation test that permutes chosen variables (crossover|time|ward)");
  add_common(cmd_quasi, true);
  std::vector<std::string> permute;
  cmd_quasi->add_option("--permute", permute, "variables to permute")
      ->required()
      ->delimiter(',');

  auto* cmd_sim = app.add_subcommand("simulate-sw", "generate a synthetic stepped-wedge study");
  randinf::SimulateSwParams sim;
  cmd_sim->add_option("--wards", sim.n_wards, "number of wards");
  cmd_sim->add_option("--periods", sim.n_periods, "number of periods");
  cmd_sim->add_option("--patients", sim.patients_per_cell, "patients per ward-period cell");
  cmd_sim->add_option("--tau", sim.tau, "constant treatment effect");
  cmd_sim->add_option("--trend", sim.trend, "additive per-period trend");
  cmd_sim->add_option("--ward-sd", sim.ward_sd, "ward effect standard deviation");
  cmd_sim->add_option("--noise-sd", sim.noise_sd, "noise standard deviation");
  cmd_sim->add_option("--seed", sim.seed, "random seed");
  std::string sim_out;
  cmd_sim->add_option("--out", sim_out, "CSV output path")->required();

  auto* cmd_fisher = app.add_subcommand("fisher", "exact test for a 2x2 table");
  std::vector<std::int64_t> table;
  std::string side = "greater";
  cmd_fisher->add_option("--table", table, "counts n00,n01,n10,n11")
      ->required()
      ->delimiter(',')
      ->expected(4);
  cmd_fisher->add_option("--side", side, "greater|less|two-sided");
  cmd_fisher->add_option("--out", out_path, "write the JSON report here instead of stdout");

  auto* cmd_conformal =
      app.add_subcommand("conformal", "full conformal prediction set from an x,y CSV");
  randinf::ConformalCliParams conf;
  std::string conformal_data;
  cmd_conformal->add_option("--data", conformal_data, "x,y CSV; last row is predicted")
      ->required();
  cmd_conformal->add_option("--alpha", conf.alpha, "miscoverage level");
  cmd_conformal->add_option("--grid-points", conf.grid_points, "candidate grid density");
  cmd_conformal->add_flag("--weighted", conf.weighted, "covariate-shift weighting");
  cmd_conformal->add_option("--ref-mean", conf.ref_mean, "reference density mean");
  cmd_conformal->add_option("--ref-sd", conf.ref_sd, "reference density sd");
  cmd_conformal->add_option("--target-mean", conf.target_mean, "target density mean");
  cmd_conformal->add_option("--target-sd", conf.target_sd, "target density sd");
  cmd_conformal->add_option("--out", out_path, "write the JSON report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_test->parsed()) {
      const auto config = load_config(config_path, flags);
      emit(randinf::run_test(randinf::read_dataset_csv_file(data_path), config), out_path);
    } else if (cmd_invert->parsed()) {
      const auto config = load_config(config_path, flags);
      emit(randinf::run_invert(randinf::read_dataset_csv_file(data_path), config), out_path);
    } else if (cmd_quasi->parsed()) {
      const auto config = load_config(config_path, flags);
      const std::set<std::string> vars(permute.begin(), permute.end());
      const json report =
          randinf::run_quasi(randinf::read_dataset_csv_file(data_path), config, vars);
      if (report.value("quasi", false))
        std::cerr << "NOTE: " << report["assumption"].get<std::string>() << "\n";
      emit(report, out_path);
    } else if (cmd_sim->parsed()) {
      const auto study = randinf::run_simulate_sw(sim);
      std::ofstream out(sim_out);
      if (!out) throw randinf::ConfigError("cannot open output file: " + sim_out);
      randinf::write_dataset_csv(study.data, out);
      std::cout << study.meta.dump(2) << "\n";
    } else if (cmd_fisher->parsed()) {
      emit(randinf::run_fisher(table[0], table[1], table[2], table[3], side), out_path);
    } else if (cmd_conformal->parsed()) {
      std::ifstream in(conformal_data);
      if (!in) throw randinf::ConfigError("cannot open data file: " + conformal_data);
      emit(randinf::run_conformal(in, conf), out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
