#include "randinf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace randinf {

namespace {

struct Candidate {
  Assignment z;
  double weight = 1.0;
};

// Candidates against which every tau is tested: the whole conditioning cell in
// exact mode, B cell draws in Monte Carlo mode (same sampling strategy as the
// engine: direct for uniform cells, rejection otherwise).
std::vector<Candidate> gather_candidates(const AssignmentModel& model,
                                         const Partition& partition, std::uint64_t obs_idx,
                                         const InversionOptions& options, bool* uniform_cell) {
  const std::uint32_t cell = partition.cell_of(obs_idx);
  const auto members = partition.members(cell);
  bool uniform = true;
  const double d0 = model.density(members[0]);
  for (auto m : members)
    if (std::abs(model.density(m) - d0) > 1e-15 * d0) {
      uniform = false;
      break;
    }
  *uniform_cell = uniform;

  std::vector<Candidate> out;
  if (options.mode == PValueMode::Exact) {
    if (members.size() > options.max_exact_cell)
      throw ConfigError("conditioning cell too large for exact inversion; use Monte Carlo mode");
    out.reserve(members.size());
    for (auto m : members) out.push_back({model.at(m), uniform ? 1.0 : model.density(m)});
    return out;
  }

  Rng root(options.seed);
  if (!uniform) {
    Rng probe = root.derive(~std::uint64_t{0});
    std::uint64_t accepted = 0;
    for (std::uint64_t t = 0; t < 100'000 && accepted < 10; ++t) {
      const auto idx = model.index_of(model.sample(probe));
      if (idx && partition.cell_of(*idx) == cell) ++accepted;
    }
    if (accepted < 10)
      throw InfeasibleError("conditioning cell acceptance rate is below 1e-4; use exact mode");
  }
  out.reserve(static_cast<std::size_t>(options.resamples));
  for (std::uint64_t b = 0; b < options.resamples; ++b) {
    Rng rb = root.derive(b);
    if (uniform) {
      out.push_back({model.at(members[rb.uniform_index(members.size())]), 1.0});
    } else {
      for (;;) {
        Assignment z = model.sample(rb);
        const auto idx = model.index_of(z);
        if (idx && partition.cell_of(*idx) == cell) {
          out.push_back({std::move(z), 1.0});
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace

InversionResult invert_constant_effect(const AssignmentModel& model, const Partition& partition,
                                       const ExposureMap& exposure, const Statistic& statistic,
                                       const ObservedData& observed,
                                       const std::vector<double>& tau_grid, double level,
                                       const InversionOptions& options) {
  if (tau_grid.size() < 3) throw ConfigError("inversion grid needs at least 3 points");
  if (!std::is_sorted(tau_grid.begin(), tau_grid.end()))
    throw ConfigError("inversion grid must be sorted");
  if (!(level > 0.0) || !(level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");

  const auto obs_idx = model.index_of(observed.assignment);
  if (!obs_idx) throw DataError("observed assignment does not belong to the assignment space");
  const std::int64_t cell = partition.cell_of(*obs_idx);

  bool uniform_cell = true;
  const std::vector<Candidate> candidates =
      gather_candidates(model, partition, *obs_idx, options, &uniform_cell);
  const bool monte_carlo = options.mode == PValueMode::MonteCarlo;

  const std::vector<int> d_obs = exposure.profile(observed.assignment);
  const std::size_t n = observed.outcomes.size();

  // Per-candidate statistic as a function of tau. With a linear statistic,
  // T_tau = base - tau * shift_load is assembled once; otherwise the statistic
  // is re-evaluated on shifted outcomes for every tau.
  std::vector<double> base, shift_load;
  const bool linear = static_cast<bool>(statistic.linear_weights);
  double obs_base = 0.0, obs_load = 0.0;
  const PartialOutcomes unshifted = PartialOutcomes::full(observed.outcomes);

  auto linear_terms = [&](const Assignment& z, double* b_out, double* l_out) {
    StatisticInput in{cell, z, unshifted,
                      observed.covariates ? &*observed.covariates : nullptr};
    const std::vector<double> w = statistic.linear_weights(in);
    double b = 0.0, l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      b += w[i] * observed.outcomes[i];
      l += w[i] * d_obs[i];
    }
    *b_out = b;
    *l_out = l;
  };

  if (linear) {
    base.resize(candidates.size());
    shift_load.resize(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c)
      linear_terms(candidates[c].z, &base[c], &shift_load[c]);
    linear_terms(observed.assignment, &obs_base, &obs_load);
  }

  auto shifted_outcomes = [&](double tau) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = observed.outcomes[i] - tau * d_obs[i];
    return y;
  };

  InversionResult result;
  result.level = level;
  result.one_sided_level = (1.0 - level) / 2.0;
  result.table.reserve(tau_grid.size());

  for (double tau : tau_grid) {
    double t_obs;
    std::vector<double> t_candidates(candidates.size());
    if (linear) {
      t_obs = obs_base - tau * obs_load;
      for (std::size_t c = 0; c < candidates.size(); ++c)
        t_candidates[c] = base[c] - tau * shift_load[c];
    } else {
      const PartialOutcomes shifted = PartialOutcomes::full(shifted_outcomes(tau));
      StatisticInput obs_in{cell, observed.assignment, shifted,
                            observed.covariates ? &*observed.covariates : nullptr};
      t_obs = statistic.evaluate(obs_in);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        StatisticInput in{cell, candidates[c].z, shifted,
                          observed.covariates ? &*observed.covariates : nullptr};
        t_candidates[c] = statistic.evaluate(in);
      }
    }

    InversionRow row;
    row.tau = tau;
    if (monte_carlo) {
      std::uint64_t ge = 0, le = 0;
      for (double t : t_candidates) {
        ge += t >= t_obs;
        le += t <= t_obs;
      }
      row.p_lower = static_cast<double>(1 + ge) / static_cast<double>(candidates.size() + 1);
      row.p_upper = static_cast<double>(1 + le) / static_cast<double>(candidates.size() + 1);
    } else if (uniform_cell) {
      std::uint64_t ge = 0, le = 0;
      for (double t : t_candidates) {
        ge += t >= t_obs;
        le += t <= t_obs;
      }
      row.p_lower = static_cast<double>(ge) / static_cast<double>(candidates.size());
      row.p_upper = static_cast<double>(le) / static_cast<double>(candidates.size());
    } else {
      double ge = 0, le = 0, den = 0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (t_candidates[c] >= t_obs) ge += candidates[c].weight;
        if (t_candidates[c] <= t_obs) le += candidates[c].weight;
        den += candidates[c].weight;
      }
      row.p_lower = ge / den;
      row.p_upper = le / den;
    }
    row.retained =
        row.p_lower > result.one_sided_level && row.p_upper > result.one_sided_level;
    result.table.push_back(row);
  }

  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  std::size_t first = tau_grid.size(), last = 0, count = 0;
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    if (result.table[i].retained) {
      if (count == 0) first = i;
      last = i;
      ++count;
    }
  }
  if (count == 0) {
    result.empty = true;
  } else {
    lo = result.table[first].tau;
    hi = result.table[last].tau;
    result.contiguous = (last - first + 1) == count;
  }
  result.lower = lo;
  result.upper = hi;
  return result;
}

std::vector<double> default_tau_grid(const ExposureMap& exposure, const ObservedData& observed,
                                     std::size_t points, double span_sds) {
  const auto d = exposure.profile(observed.assignment);
  double s1 = 0, s0 = 0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < observed.outcomes.size(); ++i) {
    if (d[i] == 1) {
      s1 += observed.outcomes[i];
      ++n1;
    } else {
      s0 += observed.outcomes[i];
      ++n0;
    }
  }
  const double effect =
      (n1 > 0 && n0 > 0)
          ? s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0)
          : 0.0;
  double mean = 0;
  for (double y : observed.outcomes) mean += y;
  mean /= static_cast<double>(observed.outcomes.size());
  double var = 0;
  for (double y : observed.outcomes) var += (y - mean) * (y - mean);
  var /= static_cast<double>(std::max<std::size_t>(observed.outcomes.size() - 1, 1));
  const double sd = std::sqrt(var);
  const double half_width = span_sds * (sd > 0 ? sd : 1.0);

  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double frac = points > 1 ? static_cast<double>(i) / static_cast<double>(points - 1)
                                   : 0.5;
    grid[i] = effect - half_width + 2.0 * half_width * frac;
  }
  return grid;
}

}  // namespace randinf
