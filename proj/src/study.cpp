#include "randinf/study.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "randinf/applications.hpp"
#include "randinf/conditioning.hpp"
#include "randinf/engine.hpp"
#include "randinf/inference.hpp"

namespace randinf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

[[noreturn]] void csv_error(std::size_t line_no, const std::string& msg) {
  throw DataError("line " + std::to_string(line_no) + ": " + msg);
}

long long parse_int(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    csv_error(line_no, std::string("expected an integer for ") + what + ", got '" + s + "'");
  }
}

double parse_double(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    csv_error(line_no, std::string("expected a number for ") + what + ", got '" + s + "'");
  }
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: empty file, expected CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "unit_id,cluster,period,treatment,outcome")
    throw DataError("line 1: expected header 'unit_id,cluster,period,treatment,outcome', got '" +
                    line + "'");
  Dataset d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) csv_error(line_no, "expected 5 comma-separated fields");
    d.unit_id.push_back(parse_int(fields[0], line_no, "unit_id"));
    d.cluster.push_back(static_cast<int>(parse_int(fields[1], line_no, "cluster")));
    d.period.push_back(static_cast<int>(parse_int(fields[2], line_no, "period")));
    d.treatment.push_back(static_cast<int>(parse_int(fields[3], line_no, "treatment")));
    d.outcome.push_back(parse_double(fields[4], line_no, "outcome"));
    if (d.cluster.back() < 0) csv_error(line_no, "cluster must be nonnegative");
    if (d.period.back() < 0) csv_error(line_no, "period must be nonnegative");
    if (d.treatment.back() != 0 && d.treatment.back() != 1)
      csv_error(line_no, "treatment must be 0 or 1");
  }
  if (d.size() == 0) throw DataError("no data rows");
  return d;
}

Dataset read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  return read_dataset_csv(in);
}

void write_dataset_csv(const Dataset& d, std::ostream& out) {
  out << "unit_id,cluster,period,treatment,outcome\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.unit_id[i] << "," << d.cluster[i] << "," << d.period[i] << ","
        << d.treatment[i] << ",";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", d.outcome[i]);
    out << buf << "\n";
  }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

StudyConfig parse_study_config(const json& j) {
  StudyConfig c;
  if (j.contains("design")) {
    const auto& d = j.at("design");
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "complete") c.design = DesignKind::Complete;
    else if (kind == "bernoulli") c.design = DesignKind::Bernoulli;
    else if (kind == "crossover") c.design = DesignKind::Crossover;
    else if (kind == "restricted") c.design = DesignKind::Restricted;
    else throw ConfigError("unknown design kind: " + kind);
    c.bernoulli_prob = get_or(d, "prob", 0.5);
    if (d.contains("n_clusters")) c.n_clusters = d.at("n_clusters").get<int>();
    c.balance_function = get_or<std::string>(d, "balance", "");
    c.balance_threshold = get_or(d, "threshold", 0.0);
  }
  if (j.contains("null")) {
    const auto& h = j.at("null");
    const std::string kind = h.at("kind").get<std::string>();
    if (kind == "sharp") c.null = NullKind::Sharp;
    else if (kind == "constant_effect") c.null = NullKind::ConstantEffect;
    else if (kind == "spillover") c.null = NullKind::Spillover;
    else throw ConfigError("unknown null kind: " + kind);
    c.tau = get_or(h, "tau", 0.0);
  }
  if (j.contains("conditioning")) {
    const auto& p = j.at("conditioning");
    const std::string kind = p.at("kind").get<std::string>();
    if (kind == "none") c.conditioning = ConditioningKind::None;
    else if (kind == "function") c.conditioning = ConditioningKind::Function;
    else if (kind == "order_stats") c.conditioning = ConditioningKind::OrderStats;
    else if (kind == "focal") c.conditioning = ConditioningKind::Focal;
    else if (kind == "biclique") c.conditioning = ConditioningKind::Biclique;
    else throw ConfigError("unknown conditioning kind: " + kind);
    c.conditioning_function = get_or<std::string>(p, "name", "");
    if (p.contains("units")) c.focal_units = p.at("units").get<std::vector<std::size_t>>();
    c.biclique_min_units = get_or<std::size_t>(p, "min_units", 0);
  }
  if (j.contains("statistic")) {
    const auto& s = j.at("statistic");
    c.statistic = get_or<std::string>(s, "name", "t1");
    c.orientation = get_or<std::string>(s, "orientation", "large");
    if (c.orientation != "large" && c.orientation != "small")
      throw ConfigError("statistic orientation must be 'large' or 'small'");
  }
  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    const std::string kind = m.at("kind").get<std::string>();
    if (kind == "exact") c.mode = ModeKind::Exact;
    else if (kind == "mc") c.mode = ModeKind::MonteCarlo;
    else throw ConfigError("unknown mode kind: " + kind);
    c.resamples = get_or<std::uint64_t>(m, "resamples", 10'000);
  }
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.level = get_or(j, "level", 0.9);
  if (j.contains("grid")) {
    c.grid_points = get_or<std::size_t>(j.at("grid"), "points", 201);
    c.grid_span_sds = get_or(j.at("grid"), "span_sds", 5.0);
  }
  if (j.contains("observed_order"))
    c.observed_order = j.at("observed_order").get<Assignment>();
  return c;
}

json study_config_to_json(const StudyConfig& c) {
  json j;
  json d;
  switch (c.design) {
    case DesignKind::Complete: d["kind"] = "complete"; break;
    case DesignKind::Bernoulli: d["kind"] = "bernoulli"; d["prob"] = c.bernoulli_prob; break;
    case DesignKind::Crossover: d["kind"] = "crossover"; break;
    case DesignKind::Restricted:
      d["kind"] = "restricted";
      d["balance"] = c.balance_function;
      d["threshold"] = c.balance_threshold;
      break;
  }
  if (c.n_clusters) d["n_clusters"] = *c.n_clusters;
  j["design"] = d;

  json h;
  switch (c.null) {
    case NullKind::Sharp: h["kind"] = "sharp"; break;
    case NullKind::ConstantEffect: h["kind"] = "constant_effect"; h["tau"] = c.tau; break;
    case NullKind::Spillover: h["kind"] = "spillover"; break;
  }
  j["null"] = h;

  json p;
  switch (c.conditioning) {
    case ConditioningKind::None: p["kind"] = "none"; break;
    case ConditioningKind::Function:
      p["kind"] = "function";
      p["name"] = c.conditioning_function;
      break;
    case ConditioningKind::OrderStats: p["kind"] = "order_stats"; break;
    case ConditioningKind::Focal: p["kind"] = "focal"; p["units"] = c.focal_units; break;
    case ConditioningKind::Biclique:
      p["kind"] = "biclique";
      p["min_units"] = c.biclique_min_units;
      break;
  }
  j["conditioning"] = p;

  j["statistic"] = {{"name", c.statistic}, {"orientation", c.orientation}};
  if (c.mode == ModeKind::Exact) j["mode"] = {{"kind", "exact"}};
  else j["mode"] = {{"kind", "mc"}, {"resamples", c.resamples}};
  j["seed"] = c.seed;
  j["level"] = c.level;
  j["grid"] = {{"points", c.grid_points}, {"span_sds", c.grid_span_sds}};
  if (c.observed_order) j["observed_order"] = *c.observed_order;
  return j;
}

std::string config_hash(const json& canonical) {
  const std::string s = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Study setup shared by the commands
// ---------------------------------------------------------------------------

namespace {

struct StudySetup {
  AssignmentModel model;
  ExposureMap exposure;
  std::vector<UnitPlacement> placements;
  ObservedData observed;
  NullHypothesis null;
  Partition partition;
  Statistic statistic;
  int n_clusters = 0;
  int n_periods = 0;
};

double named_balance(const std::string& name, const Assignment& z) {
  if (name == "half_imbalance") {
    // |treated in first half - treated in second half|
    const std::size_t half = z.size() / 2;
    int a = 0, b = 0;
    for (std::size_t i = 0; i < z.size(); ++i) (i < half ? a : b) += z[i];
    return std::abs(a - b);
  }
  throw ConfigError("unknown balance function: " + name);
}

std::int64_t named_conditioning(const std::string& name, const Assignment& z) {
  if (name == "treated_count") return std::accumulate(z.begin(), z.end(), std::int64_t{0});
  if (name == "first_label") return z.empty() ? 0 : z[0];
  throw ConfigError("unknown conditioning function: " + name);
}

// Crossover period of each cluster from the data's treatment column; cluster
// at position k of the returned order crosses over at period k + 1.
Assignment derive_crossover_order(const Dataset& data, int n_clusters) {
  std::vector<int> first_exposed(static_cast<std::size_t>(n_clusters), -1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.treatment[i] == 1) {
      auto& t = first_exposed[static_cast<std::size_t>(data.cluster[i])];
      if (t < 0 || data.period[i] < t) t = data.period[i];
    }
  }
  std::vector<int> seen(static_cast<std::size_t>(n_clusters), 0);
  Assignment order(static_cast<std::size_t>(n_clusters), -1);
  for (int c = 0; c < n_clusters; ++c) {
    const int t = first_exposed[static_cast<std::size_t>(c)];
    if (t < 1 || t > n_clusters)
      throw DataError("cannot derive the crossover order: cluster " + std::to_string(c) +
                      (t < 0 ? " is never exposed" : " first crosses over at period " +
                                                         std::to_string(t) +
                                                         ", outside 1.." +
                                                         std::to_string(n_clusters)) +
                      "; pass observed_order in the config");
    if (seen[static_cast<std::size_t>(t - 1)]++)
      throw DataError("cannot derive the crossover order: two clusters cross over at period " +
                      std::to_string(t));
    order[static_cast<std::size_t>(t - 1)] = c;
  }
  return order;
}

StudySetup make_setup(const Dataset& data, const StudyConfig& config) {
  const std::size_t n = data.size();
  std::vector<UnitPlacement> placements(n);
  for (std::size_t i = 0; i < n; ++i) placements[i] = {data.cluster[i], data.period[i]};

  auto build = [&](AssignmentModel model, ExposureMap exposure,
                   Assignment observed_assignment) -> StudySetup {
    ObservedData observed;
    observed.assignment = std::move(observed_assignment);
    observed.outcomes = data.outcome;

    NullHypothesis null = fisher_sharp_null(n);
    if (config.null == NullKind::ConstantEffect)
      null = constant_effect_null(exposure, config.tau);
    else if (config.null == NullKind::Spillover) null = spillover_null(exposure);

    Partition partition = trivial_partition(model);
    switch (config.conditioning) {
      case ConditioningKind::None: break;
      case ConditioningKind::Function:
        partition = partition_by_function(model, [&config](const Assignment& z) {
          return named_conditioning(config.conditioning_function, z);
        });
        break;
      case ConditioningKind::OrderStats:
        partition = partition_by_order_statistics(model);
        break;
      case ConditioningKind::Focal:
        partition = partition_by_focal_units(model, exposure, config.focal_units);
        break;
      case ConditioningKind::Biclique: {
        const auto graph = NullExposureGraph::build(model, exposure);
        const auto cells = biclique_decomposition(graph, config.biclique_min_units);
        partition = partition_from_bicliques(cells, model.size());
        break;
      }
    }

    StatisticContext ctx{&exposure, &placements};
    const Statistic statistic = StatisticRegistry::with_builtins().make(
        config.statistic, ctx,
        config.orientation == "small" ? Orientation::SmallIsExtreme
                                      : Orientation::LargeIsExtreme);

    int n_clusters = 0, n_periods = 0;
    for (std::size_t i = 0; i < n; ++i) {
      n_clusters = std::max(n_clusters, data.cluster[i] + 1);
      n_periods = std::max(n_periods, data.period[i] + 1);
    }
    return StudySetup{std::move(model),    std::move(exposure), std::move(placements),
                      std::move(observed), std::move(null),     std::move(partition),
                      statistic,           n_clusters,          n_periods};
  };

  switch (config.design) {
    case DesignKind::Crossover: {
      int n_clusters = 0;
      for (std::size_t i = 0; i < n; ++i) n_clusters = std::max(n_clusters, data.cluster[i] + 1);
      if (config.n_clusters) {
        if (*config.n_clusters < n_clusters)
          throw ConfigError("config n_clusters is smaller than the data's cluster range");
        n_clusters = *config.n_clusters;
      }
      int n_periods = 0;
      for (std::size_t i = 0; i < n; ++i) n_periods = std::max(n_periods, data.period[i] + 1);
      n_periods = std::max(n_periods, n_clusters + 1);

      auto model = build_crossover_orders(n_clusters);
      auto exposure = stepped_wedge_exposure(n_clusters, n_periods, placements);
      Assignment order = config.observed_order ? *config.observed_order
                                               : derive_crossover_order(data, n_clusters);
      if (!model.index_of(order))
        throw DataError("observed crossover order is not a permutation of the clusters");
      // the treatment column must equal the exposure implied by the order
      const auto implied = exposure.profile(order);
      for (std::size_t i = 0; i < n; ++i)
        if (implied[i] != data.treatment[i])
          throw DataError("line " + std::to_string(i + 2) +
                          ": treatment column disagrees with the exposure implied by the "
                          "crossover order");
      return build(std::move(model), std::move(exposure), std::move(order));
    }
    case DesignKind::Complete: {
      const int k = std::accumulate(data.treatment.begin(), data.treatment.end(), 0);
      auto model = build_complete_randomization(static_cast<int>(n), k);
      return build(std::move(model), identity_exposure(n),
                   Assignment(data.treatment.begin(), data.treatment.end()));
    }
    case DesignKind::Bernoulli: {
      auto model = build_bernoulli(static_cast<int>(n), config.bernoulli_prob);
      return build(std::move(model), identity_exposure(n),
                   Assignment(data.treatment.begin(), data.treatment.end()));
    }
    case DesignKind::Restricted: {
      const int k = std::accumulate(data.treatment.begin(), data.treatment.end(), 0);
      auto base = build_complete_randomization(static_cast<int>(n), k);
      const std::string name = config.balance_function;
      auto model = base.restricted(
          [name](const Assignment& z) { return named_balance(name, z); },
          config.balance_threshold);
      return build(std::move(model), identity_exposure(n),
                   Assignment(data.treatment.begin(), data.treatment.end()));
    }
  }
  throw ConfigError("unreachable design kind");
}

json report_from(const PValueReport& r, const StudyConfig& config) {
  json j;
  j["schema"] = 1;
  j["p_value"] = r.p;
  j["cell"] = r.cell;
  j["cell_size"] = r.cell_size;
  j["mode"] = r.mode == PValueMode::Exact ? "exact" : "mc";
  if (r.mode == PValueMode::MonteCarlo) j["resamples"] = r.resamples;
  j["seed"] = config.seed;
  j["statistic"] = r.observed_stat;
  j["statistic_name"] = config.statistic;
  j["distribution_sample"] = r.distribution;
  j["config_hash"] = config_hash(study_config_to_json(config));
  return j;
}

PValueReport run_engine(const StudySetup& s, const StudyConfig& config) {
  EngineOptions options;
  options.collect_distribution = true;
  if (config.mode == ModeKind::Exact)
    return exact_p_value(s.model, s.partition, s.null, s.statistic, s.observed, options);
  return mc_p_value(s.model, s.partition, s.null, s.statistic, s.observed, config.resamples,
                    config.seed, options);
}

}  // namespace

json run_test(const Dataset& data, const StudyConfig& config) {
  const StudySetup s = make_setup(data, config);
  return report_from(run_engine(s, config), config);
}

json run_invert(const Dataset& data, const StudyConfig& config) {
  StudyConfig shifted_config = config;
  shifted_config.null = NullKind::Sharp;  // the shift encodes each tested tau
  const StudySetup s = make_setup(data, shifted_config);

  const std::vector<double> grid =
      default_tau_grid(s.exposure, s.observed, config.grid_points, config.grid_span_sds);
  InversionOptions options;
  options.mode = config.mode == ModeKind::Exact ? PValueMode::Exact : PValueMode::MonteCarlo;
  options.resamples = config.resamples;
  options.seed = config.seed;
  const InversionResult result = invert_constant_effect(
      s.model, s.partition, s.exposure, s.statistic, s.observed, grid, config.level, options);

  json j;
  j["schema"] = 1;
  j["level"] = result.level;
  j["one_sided_level"] = result.one_sided_level;
  j["mode"] = config.mode == ModeKind::Exact ? "exact" : "mc";
  j["seed"] = config.seed;
  json rows = json::array();
  for (const auto& row : result.table)
    rows.push_back({{"tau", row.tau},
                    {"p_lower", row.p_lower},
                    {"p_upper", row.p_upper},
                    {"retained", row.retained}});
  j["grid"] = rows;
  if (result.empty) {
    j["interval"] = nullptr;
  } else {
    j["interval"] = {result.lower, result.upper};
  }
  j["empty"] = result.empty;
  j["contiguous"] = result.contiguous;
  j["config_hash"] = config_hash(study_config_to_json(config));
  return j;
}

json run_quasi(const Dataset& data, const StudyConfig& config,
               const std::set<std::string>& permute) {
  for (const auto& v : permute)
    if (v != "crossover" && v != "time" && v != "ward")
      throw ConfigError("quasi: permutable variables are crossover, time, ward; got " + v);
  if (permute.empty()) throw ConfigError("quasi: choose at least one variable to permute");
  if (config.design != DesignKind::Crossover)
    throw ConfigError("quasi permutation schemes apply to the crossover design");

  // permutation schemes are Monte Carlo by nature
  StudyConfig effective = config;
  effective.mode = ModeKind::MonteCarlo;

  const bool randomization_test = permute == std::set<std::string>{"crossover"};
  json j;
  if (randomization_test) {
    // permuting only the crossover order IS the randomization test
    const StudySetup s = make_setup(data, effective);
    j = report_from(run_engine(s, effective), effective);
  } else {
    const StudySetup s = make_setup(data, effective);
    const std::size_t n = data.size();
    const Orientation orient = s.statistic.orientation;
    const PartialOutcomes outcomes = PartialOutcomes::full(data.outcome);
    const double t_obs =
        s.statistic.evaluate({0, s.observed.assignment, outcomes, nullptr});

    const auto registry = StatisticRegistry::with_builtins();
    Rng root(config.seed);
    std::uint64_t hits = 0;
    std::vector<std::size_t> rows(n);
    for (std::uint64_t b = 0; b < config.resamples; ++b) {
      Rng rb = root.derive(b);
      Assignment order = s.observed.assignment;
      if (permute.count("crossover")) order = s.model.sample(rb);
      std::vector<UnitPlacement> placements = s.placements;
      if (permute.count("time")) {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        rb.shuffle(rows);
        for (std::size_t i = 0; i < n; ++i) placements[i].period = s.placements[rows[i]].period;
      }
      if (permute.count("ward")) {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        rb.shuffle(rows);
        for (std::size_t i = 0; i < n; ++i)
          placements[i].cluster = s.placements[rows[i]].cluster;
      }
      auto exposure = stepped_wedge_exposure(s.n_clusters, s.n_periods, placements);
      StatisticContext ctx{&exposure, &placements};
      const Statistic stat = registry.make(config.statistic, ctx, orient);
      const double t = stat.evaluate({0, order, outcomes, nullptr});
      hits += orient == Orientation::SmallIsExtreme ? t <= t_obs : t >= t_obs;
    }
    j["schema"] = 1;
    j["p_value"] =
        static_cast<double>(1 + hits) / static_cast<double>(config.resamples + 1);
    j["cell"] = 0;
    j["cell_size"] = 0;
    j["mode"] = "mc";
    j["resamples"] = config.resamples;
    j["seed"] = config.seed;
    j["statistic"] = t_obs;
    j["statistic_name"] = config.statistic;
    j["distribution_sample"] = json::array();
    j["config_hash"] = config_hash(study_config_to_json(effective));
  }

  j["quasi"] = !randomization_test;
  j["permuted"] = std::vector<std::string>(permute.begin(), permute.end());
  if (randomization_test) {
    j["assumption"] =
        "permuting only the crossover order uses the trial's physical randomization";
  } else {
    std::string vars;
    for (const auto& v : permute) vars += (vars.empty() ? "" : ", ") + v;
    j["assumption"] = "QUASI-randomization test: validity assumes the permuted variables (" +
                      vars + ") are exchangeable, which the design does not guarantee";
  }
  return j;
}

SimulatedStudy run_simulate_sw(const SimulateSwParams& p) {
  if (p.n_wards < 2 || p.n_wards > 8)
    throw ConfigError("simulate-sw: n_wards must be in [2, 8]");
  if (p.n_periods < p.n_wards + 1)
    throw ConfigError("simulate-sw: n_periods must be at least n_wards + 1");
  if (p.patients_per_cell < 1) throw ConfigError("simulate-sw: patients_per_cell must be >= 1");

  Rng rng(p.seed);
  Assignment order(static_cast<std::size_t>(p.n_wards));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<int> crossover(static_cast<std::size_t>(p.n_wards));
  for (int pos = 0; pos < p.n_wards; ++pos)
    crossover[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos + 1;

  std::vector<double> ward_effect(static_cast<std::size_t>(p.n_wards));
  for (auto& w : ward_effect) w = p.ward_sd * rng.normal();

  SimulatedStudy study;
  study.true_order = order;
  std::int64_t uid = 0;
  for (int w = 0; w < p.n_wards; ++w) {
    for (int t = 0; t < p.n_periods; ++t) {
      const int exposed = t >= crossover[static_cast<std::size_t>(w)] ? 1 : 0;
      for (int k = 0; k < p.patients_per_cell; ++k) {
        study.data.unit_id.push_back(uid++);
        study.data.cluster.push_back(w);
        study.data.period.push_back(t);
        study.data.treatment.push_back(exposed);
        study.data.outcome.push_back(ward_effect[static_cast<std::size_t>(w)] +
                                     p.trend * t + p.tau * exposed +
                                     p.noise_sd * rng.normal());
      }
    }
  }
  study.meta = json{{"schema", 1},
                    {"true_order", order},
                    {"n_wards", p.n_wards},
                    {"n_periods", p.n_periods},
                    {"patients_per_cell", p.patients_per_cell},
                    {"tau", p.tau},
                    {"trend", p.trend},
                    {"ward_sd", p.ward_sd},
                    {"noise_sd", p.noise_sd},
                    {"seed", p.seed}};
  return study;
}

json run_fisher(std::int64_t n00, std::int64_t n01, std::int64_t n10, std::int64_t n11,
                const std::string& side) {
  FisherSide s;
  if (side == "greater") s = FisherSide::Greater;
  else if (side == "less") s = FisherSide::Less;
  else if (side == "two-sided") s = FisherSide::TwoSided;
  else throw ConfigError("fisher side must be greater, less or two-sided");
  const TwoByTwoTable table{n00, n01, n10, n11};
  json j;
  j["schema"] = 1;
  j["table"] = {{"n00", n00}, {"n01", n01}, {"n10", n10}, {"n11", n11}};
  j["side"] = side;
  j["p_value"] = fisher_exact(table, s);
  j["point_probability"] = fisher_point_probability(table);
  return j;
}

json run_conformal(std::istream& xy_csv, const ConformalCliParams& params) {
  std::string line;
  if (!std::getline(xy_csv, line)) throw DataError("line 1: empty file, expected 'x,y' header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") throw DataError("line 1: expected header 'x,y'");
  std::vector<double> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(xy_csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) csv_error(line_no, "expected 2 comma-separated fields");
    xs.push_back(parse_double(fields[0], line_no, "x"));
    // the final row's outcome is the value being predicted; it may be blank
    if (fields[1].empty() || fields[1] == "NA") ys.push_back(0.0);
    else ys.push_back(parse_double(fields[1], line_no, "y"));
  }
  if (xs.size() < 2) throw DataError("conformal prediction needs at least 2 rows");

  ConformalProblem problem;
  problem.x = Matrix(xs.size(), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) problem.x(i, 0) = xs[i];
  problem.y = ys;
  if (params.weighted) {
    auto normal_density = [](double mean, double sd) {
      return [mean, sd](const std::vector<double>& row) {
        const double z = (row[0] - mean) / sd;
        return std::exp(-0.5 * z * z) / (sd * 2.5066282746310002);
      };
    };
    problem.reference_density = normal_density(params.ref_mean, params.ref_sd);
    problem.target_density = normal_density(params.target_mean, params.target_sd);
  }

  const ConformalPredictionSet set =
      conformal_prediction_set(problem, params.alpha, params.grid_points, params.weighted);
  json j;
  j["schema"] = 1;
  j["alpha"] = params.alpha;
  j["weighted"] = params.weighted;
  j["grid_points"] = params.grid_points;
  if (set.empty) j["interval"] = nullptr;
  else j["interval"] = {set.lower, set.upper};
  j["empty"] = set.empty;
  j["contiguous"] = set.contiguous;
  j["grid"] = set.grid;
  j["retained"] = set.retained;
  return j;
}

}  // namespace randinf
