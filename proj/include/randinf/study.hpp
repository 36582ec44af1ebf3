#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randinf/types.hpp"

namespace randinf {

// One CSV row per unit: unit_id,cluster,period,treatment,outcome.
struct Dataset {
  std::vector<std::int64_t> unit_id;
  std::vector<int> cluster;
  std::vector<int> period;
  std::vector<int> treatment;
  std::vector<double> outcome;

  std::size_t size() const { return unit_id.size(); }
};

Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv_file(const std::string& path);
void write_dataset_csv(const Dataset& data, std::ostream& out);

enum class DesignKind { Complete, Bernoulli, Crossover, Restricted };
enum class NullKind { Sharp, ConstantEffect, Spillover };
enum class ConditioningKind { None, Function, OrderStats, Focal, Biclique };
enum class ModeKind { Exact, MonteCarlo };

struct StudyConfig {
  DesignKind design = DesignKind::Crossover;
  double bernoulli_prob = 0.5;
  std::optional<int> n_clusters;  // crossover; inferred from data when absent
  // restricted designs: base complete randomization filtered by a named
  // balance function at the given threshold
  std::string balance_function;
  double balance_threshold = 0.0;

  NullKind null = NullKind::Sharp;
  double tau = 0.0;

  ConditioningKind conditioning = ConditioningKind::None;
  std::string conditioning_function;         // named g for function conditioning
  std::vector<std::size_t> focal_units;
  std::size_t biclique_min_units = 0;

  std::string statistic = "t1";
  std::string orientation = "large";  // "large" | "small"

  ModeKind mode = ModeKind::Exact;
  std::uint64_t resamples = 10'000;
  std::uint64_t seed = 0;

  double level = 0.9;                // inversion
  std::size_t grid_points = 201;
  double grid_span_sds = 5.0;

  std::optional<Assignment> observed_order;  // crossover; derived when absent
};

StudyConfig parse_study_config(const nlohmann::json& j);
nlohmann::json study_config_to_json(const StudyConfig& config);

// FNV-1a over the canonical JSON form; embedded in every report.
std::string config_hash(const nlohmann::json& canonical_config);

// The `test` command: one conditional randomization test, reported as JSON
// with the randomization-distribution sample attached for external plotting.
nlohmann::json run_test(const Dataset& data, const StudyConfig& config);

// The `invert` command: confidence interval for a constant effect.
nlohmann::json run_invert(const Dataset& data, const StudyConfig& config);

// The `quasi` command: permutation tests that permute crossover, time and/or
// ward columns. Reports are labeled QUASI with the exchangeability assumption
// spelled out (permuting only the crossover order is the randomization test).
nlohmann::json run_quasi(const Dataset& data, const StudyConfig& config,
                         const std::set<std::string>& permute);

struct SimulateSwParams {
  int n_wards = 6;
  int n_periods = 7;
  int patients_per_cell = 2;
  double tau = 0.0;
  double trend = 0.0;
  double ward_sd = 1.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

// Synthetic stepped-wedge study: outcomes are ward effect + period trend +
// tau * exposure + noise under a uniformly drawn crossover order. Returns the
// dataset and audit metadata (the true order and parameters).
struct SimulatedStudy {
  Dataset data;
  Assignment true_order;
  nlohmann::json meta;
};

SimulatedStudy run_simulate_sw(const SimulateSwParams& params);

nlohmann::json run_fisher(std::int64_t n00, std::int64_t n01, std::int64_t n10,
                          std::int64_t n11, const std::string& side);

struct ConformalCliParams {
  double alpha = 0.1;
  std::size_t grid_points = 513;
  bool weighted = false;
  // normal densities for the weighted variant (1-d covariate)
  double ref_mean = 0.0, ref_sd = 1.0;
  double target_mean = 0.0, target_sd = 1.0;
};

// The `conformal` command: reads a two-column x,y CSV whose last row's y is
// the value to predict, and reports the prediction set.
nlohmann::json run_conformal(std::istream& xy_csv, const ConformalCliParams& params);

}  // namespace randinf
