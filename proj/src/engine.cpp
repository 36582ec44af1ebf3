#include "randinf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace randinf {

namespace {

// Provider of the candidate outcome vector: the production path imputes from
// the observed data; the schedule oracle reads the true potential outcomes.
using OutcomeProvider = std::function<PartialOutcomes(const Assignment&)>;

bool at_least_as_extreme(Orientation o, double candidate, double observed) {
  return o == Orientation::SmallIsExtreme ? candidate <= observed : candidate >= observed;
}

std::string label_sequence(const Assignment& z) {
  std::string s;
  s.reserve(2 * z.size() + 2);
  s += '(';
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(z[i]);
  }
  s += ')';
  return s;
}

double evaluate_guarded(const Statistic& statistic, std::int64_t cell,
                        const Assignment& candidate, const PartialOutcomes& outcomes,
                        const ObservedData& observed) {
  StatisticInput in{cell, candidate, outcomes,
                    observed.covariates ? &*observed.covariates : nullptr};
  try {
    return statistic.evaluate(in);
  } catch (const ImputabilityError& e) {
    throw ImputabilityError(
        e.unit(), std::string(e.what()) + ": statistic '" + statistic.name +
                      "' needs an outcome outside the imputable set of the pair z=" +
                      label_sequence(observed.assignment) +
                      ", z*=" + label_sequence(candidate) + " (cell " +
                      std::to_string(cell) + ")");
  }
}

std::uint64_t observed_index(const AssignmentModel& model, const ObservedData& observed) {
  const auto idx = model.index_of(observed.assignment);
  if (!idx) throw DataError("observed assignment does not belong to the assignment space");
  return *idx;
}

PValueReport exact_over_cell(const AssignmentModel& model, const Partition& partition,
                             const Statistic& statistic, const ObservedData& observed,
                             const OutcomeProvider& outcomes_at, const EngineOptions& options) {
  const std::uint64_t obs_idx = observed_index(model, observed);
  const std::uint32_t cell = partition.cell_of(obs_idx);
  const auto members = partition.members(cell);
  if (members.size() > options.max_exact_cell)
    throw ConfigError("conditioning cell has " + std::to_string(members.size()) +
                      " assignments, above the exact-mode bound; use Monte Carlo mode");

  PValueReport report;
  report.mode = PValueMode::Exact;
  report.cell = cell;
  report.cell_size = members.size();
  report.observed_stat = evaluate_guarded(statistic, cell, observed.assignment,
                                          outcomes_at(observed.assignment), observed);

  // Uniform cells use pure counts so the p-value is a single integer division.
  bool uniform = true;
  const double d0 = model.density(members[0]);
  for (auto m : members)
    if (std::abs(model.density(m) - d0) > 1e-15 * d0) {
      uniform = false;
      break;
    }

  std::uint64_t hits = 0;
  double num = 0.0, den = 0.0;
  for (auto m : members) {
    const Assignment z = model.at(m);
    const double t = evaluate_guarded(statistic, cell, z, outcomes_at(z), observed);
    const bool extreme = at_least_as_extreme(statistic.orientation, t, report.observed_stat);
    if (uniform) {
      hits += extreme;
    } else {
      const double w = model.density(m);
      num += extreme ? w : 0.0;
      den += w;
    }
    if (options.collect_distribution && report.distribution.size() < options.distribution_cap)
      report.distribution.push_back(t);
  }
  report.p = uniform ? static_cast<double>(hits) / static_cast<double>(members.size())
                     : num / den;
  return report;
}

}  // namespace

PValueReport exact_p_value(const AssignmentModel& model, const Partition& partition,
                           const NullHypothesis& null, const Statistic& statistic,
                           const ObservedData& observed, const EngineOptions& options) {
  return exact_over_cell(
      model, partition, statistic, observed,
      [&](const Assignment& z) { return null.impute(observed, z); }, options);
}

PValueReport mc_p_value(const AssignmentModel& model, const Partition& partition,
                        const NullHypothesis& null, const Statistic& statistic,
                        const ObservedData& observed, std::uint64_t resamples,
                        std::uint64_t seed, const EngineOptions& options) {
  const std::uint64_t obs_idx = observed_index(model, observed);
  const std::uint32_t cell = partition.cell_of(obs_idx);
  const auto members = partition.members(cell);

  PValueReport report;
  report.mode = PValueMode::MonteCarlo;
  report.cell = cell;
  report.cell_size = members.size();
  report.resamples = resamples;
  report.seed = seed;
  report.observed_stat = evaluate_guarded(statistic, cell, observed.assignment,
                                          null.impute(observed, observed.assignment), observed);

  bool uniform = true;
  const double d0 = model.density(members[0]);
  for (auto m : members)
    if (std::abs(model.density(m) - d0) > 1e-15 * d0) {
      uniform = false;
      break;
    }

  Rng root(seed);
  std::function<Assignment(Rng&)> draw_from_cell;
  if (uniform) {
    draw_from_cell = [&](Rng& r) { return model.at(members[r.uniform_index(members.size())]); };
  } else {
    // Rejection against cell membership, with an acceptance-rate probe.
    {
      Rng probe = root.derive(~std::uint64_t{0});
      std::uint64_t accepted = 0;
      constexpr std::uint64_t kProbe = 100'000;
      for (std::uint64_t t = 0; t < kProbe; ++t) {
        const auto idx = model.index_of(model.sample(probe));
        if (idx && partition.cell_of(*idx) == cell) ++accepted;
        if (accepted >= 10) break;
      }
      if (accepted < 10)
        throw InfeasibleError(
            "conditioning cell acceptance rate is below 1e-4; use exact mode or a "
            "coarser partition");
    }
    draw_from_cell = [&](Rng& r) {
      for (;;) {
        Assignment z = model.sample(r);
        const auto idx = model.index_of(z);
        if (idx && partition.cell_of(*idx) == cell) return z;
      }
    };
  }

  std::uint64_t hits = 0;
  for (std::uint64_t b = 0; b < resamples; ++b) {
    Rng rb = root.derive(b);
    const Assignment z = draw_from_cell(rb);
    const double t = evaluate_guarded(statistic, cell, z, null.impute(observed, z), observed);
    hits += at_least_as_extreme(statistic.orientation, t, report.observed_stat);
    if (options.collect_distribution && report.distribution.size() < options.distribution_cap)
      report.distribution.push_back(t);
  }
  report.p = static_cast<double>(1 + hits) / static_cast<double>(resamples + 1);
  return report;
}

bool lemma2_equivalence_check(const AssignmentModel& model, const Partition& partition,
                              const NullHypothesis& null, const Statistic& statistic,
                              const OutcomeSchedule& schedule, std::uint64_t seed) {
  Rng rng(seed);
  ObservedData observed;
  observed.assignment = model.sample(rng);
  observed.outcomes = schedule.evaluate(observed.assignment);

  const PValueReport imputed = exact_p_value(model, partition, null, statistic, observed);
  const PValueReport from_schedule = exact_over_cell(
      model, partition, statistic, observed,
      [&](const Assignment& z) {
        const std::vector<double> truth = schedule.evaluate(z);
        std::vector<double> values(truth.size(), 0.0);
        std::vector<std::uint8_t> defined(truth.size(), 0);
        for (std::size_t i = 0; i < truth.size(); ++i) {
          if (null.unit_imputable(i, observed.assignment, z)) {
            values[i] = truth[i];
            defined[i] = 1;
          }
        }
        return PartialOutcomes(std::move(values), std::move(defined));
      },
      EngineOptions{});
  return imputed.p == from_schedule.p;
}

PValueReport post_randomized_p_value(const AssignmentModel& model,
                                     const ConditioningVariable& variable,
                                     const NullHypothesis& null,
                                     const std::function<Statistic(std::int64_t)>& statistic_by_g,
                                     const ObservedData& observed, std::uint64_t seed,
                                     PValueMode mode, std::uint64_t resamples,
                                     const EngineOptions& options) {
  observed_index(model, observed);
  Rng root(seed);
  const std::int64_t g = variable.draw(observed.assignment, root);
  const std::vector<double> posterior = bayes_conditional_density(model, variable, g);
  const Statistic statistic = statistic_by_g(g);

  PValueReport report;
  report.cell = g;
  report.seed = seed;
  report.mode = mode;
  std::uint64_t support = 0;
  for (double w : posterior) support += w > 0.0;
  report.cell_size = support;
  report.observed_stat = evaluate_guarded(statistic, g, observed.assignment,
                                          null.impute(observed, observed.assignment), observed);

  if (mode == PValueMode::Exact) {
    // uniform posteriors use pure counts, as in the cell-conditional path
    bool uniform = true;
    double w0 = -1.0;
    for (double w : posterior) {
      if (w <= 0.0) continue;
      if (w0 < 0.0) w0 = w;
      else if (std::abs(w - w0) > 1e-15 * w0) {
        uniform = false;
        break;
      }
    }
    std::uint64_t hits = 0;
    double num = 0.0, den = 0.0;
    for (std::uint64_t i = 0; i < model.size(); ++i) {
      const double w = posterior[static_cast<std::size_t>(i)];
      if (w <= 0.0) continue;
      const Assignment z = model.at(i);
      const double t = evaluate_guarded(statistic, g, z, null.impute(observed, z), observed);
      const bool extreme = at_least_as_extreme(statistic.orientation, t, report.observed_stat);
      if (uniform) {
        hits += extreme;
      } else {
        if (extreme) num += w;
        den += w;
      }
      if (options.collect_distribution && report.distribution.size() < options.distribution_cap)
        report.distribution.push_back(t);
    }
    report.p = uniform ? static_cast<double>(hits) / static_cast<double>(support)
                       : num / den;
    return report;
  }

  // Monte Carlo under pi(. | g): inverse-CDF draws over the enumerated support.
  std::vector<double> cumulative(posterior.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < posterior.size(); ++i) {
    acc += posterior[i];
    cumulative[i] = acc;
  }
  report.resamples = resamples;
  std::uint64_t hits = 0;
  for (std::uint64_t b = 0; b < resamples; ++b) {
    Rng rb = root.derive(b);
    const double u = rb.uniform() * acc;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    if (i >= posterior.size()) i = posterior.size() - 1;
    const Assignment z = model.at(i);
    const double t = evaluate_guarded(statistic, g, z, null.impute(observed, z), observed);
    hits += at_least_as_extreme(statistic.orientation, t, report.observed_stat);
    if (options.collect_distribution && report.distribution.size() < options.distribution_cap)
      report.distribution.push_back(t);
  }
  report.p = static_cast<double>(1 + hits) / static_cast<double>(resamples + 1);
  return report;
}

AveragedPValue averaged_p_value(const std::vector<PValueReport>& reports) {
  if (reports.empty())
    throw ConfigError("averaged_p_value needs at least one report");
  AveragedPValue avg;
  double sum = 0.0;
  for (const auto& r : reports) sum += r.p;
  avg.mean_p = sum / static_cast<double>(reports.size());
  return avg;
}

}  // namespace randinf
