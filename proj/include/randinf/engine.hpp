#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "randinf/assignment.hpp"
#include "randinf/conditioning.hpp"
#include "randinf/hypothesis.hpp"
#include "randinf/statistics.hpp"

namespace randinf {

enum class PValueMode { Exact, MonteCarlo };

struct PValueReport {
  double p = 1.0;
  std::int64_t cell = 0;         // conditioning cell id, or the realized g
  std::uint64_t cell_size = 0;   // 0 when unknown
  PValueMode mode = PValueMode::Exact;
  std::uint64_t resamples = 0;   // B, Monte Carlo only
  std::uint64_t seed = 0;        // Monte Carlo / post-randomization only
  double observed_stat = 0.0;
  // Statistic values over the conditioning cell (exact) or the resamples
  // (Monte Carlo), capped; raw data for density plots.
  std::vector<double> distribution;
};

struct EngineOptions {
  // Above this cell size, exact mode refuses and suggests Monte Carlo.
  std::uint64_t max_exact_cell = std::uint64_t{1} << 22;
  bool collect_distribution = false;
  std::size_t distribution_cap = 10'000;
};

// Exact conditional p-value: the pi-probability, within the observed
// assignment's cell, of a candidate statistic at least as extreme as the
// observed one (ties count). Always positive since the cell contains the
// observed assignment.
PValueReport exact_p_value(const AssignmentModel& model, const Partition& partition,
                           const NullHypothesis& null, const Statistic& statistic,
                           const ObservedData& observed, const EngineOptions& options = {});

// Monte Carlo estimate with the add-one correction p = (1 + k) / (B + 1),
// which is valid at any B. Resamples are drawn from pi restricted to the cell:
// directly when the cell is uniform, by rejection otherwise (aborting if the
// probed acceptance rate drops below 1e-4).
PValueReport mc_p_value(const AssignmentModel& model, const Partition& partition,
                        const NullHypothesis& null, const Statistic& statistic,
                        const ObservedData& observed, std::uint64_t resamples,
                        std::uint64_t seed, const EngineOptions& options = {});

// Test-harness oracle: draws an assignment, computes the p-value once from the
// full potential-outcomes schedule and once from the observed data via the
// null's imputation rule, and reports whether the two are exactly equal. Under
// a schedule satisfying the null they must be.
bool lemma2_equivalence_check(const AssignmentModel& model, const Partition& partition,
                              const NullHypothesis& null, const Statistic& statistic,
                              const OutcomeSchedule& schedule, std::uint64_t seed);

// Post-randomized CRT: draws G from the kernel at the observed assignment,
// forms pi(. | G) by Bayes' formula, and computes the p-value under that
// density with the statistic selected by g. The report's `cell` carries the
// realized g.
PValueReport post_randomized_p_value(const AssignmentModel& model,
                                     const ConditioningVariable& variable,
                                     const NullHypothesis& null,
                                     const std::function<Statistic(std::int64_t)>& statistic_by_g,
                                     const ObservedData& observed, std::uint64_t seed,
                                     PValueMode mode, std::uint64_t resamples = 0,
                                     const EngineOptions& options = {});

struct AveragedPValue {
  double mean_p = 1.0;
  // Rejecting when mean_p <= alpha keeps the type I error within factor *
  // alpha; equivalently, reject at mean_p <= alpha / factor for level alpha.
  double factor = 2.0;
};

AveragedPValue averaged_p_value(const std::vector<PValueReport>& reports);

inline bool reject_averaged(const AveragedPValue& avg, double alpha) {
  return avg.mean_p <= alpha / avg.factor;
}

}  // namespace randinf
