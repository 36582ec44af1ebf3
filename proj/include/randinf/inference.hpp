#pragma once

#include <cstdint>
#include <vector>

#include "randinf/engine.hpp"

namespace randinf {

struct InversionRow {
  double tau = 0.0;
  // p_lower tests against effects below tau (small when tau is too low,
  // nondecreasing in tau); p_upper tests against effects above tau (small when
  // tau is too high, nonincreasing in tau for monotone statistics).
  double p_lower = 1.0;
  double p_upper = 1.0;
  bool retained = false;
};

struct InversionResult {
  std::vector<InversionRow> table;
  double level = 0.9;
  double one_sided_level = 0.05;  // (1 - level) / 2 per side
  bool empty = false;             // no tau retained
  bool contiguous = true;         // retained set has no gaps on the grid
  double lower = 0.0;             // hull of the retained set
  double upper = 0.0;
};

struct InversionOptions {
  PValueMode mode = PValueMode::Exact;
  std::uint64_t resamples = 0;  // Monte Carlo only
  std::uint64_t seed = 0;
  std::uint64_t max_exact_cell = std::uint64_t{1} << 22;
};

// Confidence set for a constant additive effect by test inversion: for each
// tau on the grid, outcomes are shifted by -tau at the units exposed under the
// observed assignment and two one-sided tests run at (1 - level) / 2 each; tau
// is retained when both p-values exceed that level. The interval is the hull
// of the retained grid points; a non-contiguous retained set is reported
// verbatim with the flag cleared.
InversionResult invert_constant_effect(const AssignmentModel& model, const Partition& partition,
                                       const ExposureMap& exposure, const Statistic& statistic,
                                       const ObservedData& observed,
                                       const std::vector<double>& tau_grid, double level,
                                       const InversionOptions& options = {});

// Default inversion grid: `points` values spanning the observed
// exposed-minus-control effect plus/minus `span_sds` standard deviations of
// the observed outcomes.
std::vector<double> default_tau_grid(const ExposureMap& exposure, const ObservedData& observed,
                                     std::size_t points = 201, double span_sds = 5.0);

}  // namespace randinf
