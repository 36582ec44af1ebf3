#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "randinf/hypothesis.hpp"
#include "randinf/types.hpp"

namespace randinf {

// Eq. (1) compares with <= : a small observed statistic is extreme. One-sided
// positive-effect tests flip to large-is-extreme on effect-signed statistics.
enum class Orientation { SmallIsExtreme, LargeIsExtreme };

struct StatisticInput {
  std::int64_t cell = 0;  // conditioning cell id, or the realized g value
  const Assignment& candidate;
  const PartialOutcomes& outcomes;
  const Matrix* covariates = nullptr;
};

// A test statistic. Per the invariance requirement, the same function applies
// to every assignment in a conditioning cell: it may depend on the cell only
// through the `cell` id. Reading an undefined outcome entry throws, which is
// what keeps non-imputable counterfactuals out of the computation.
struct Statistic {
  std::string name;
  Orientation orientation = Orientation::SmallIsExtreme;
  std::function<double(const StatisticInput&)> evaluate;
  // Optional: weights w with evaluate(in) == sum_i w[i] * y[i] over defined
  // entries (w[i] = 0 elsewhere). Lets test inversion reuse one enumeration
  // across the whole tau grid. Must agree exactly with evaluate.
  std::function<std::vector<double>(const StatisticInput&)> linear_weights;
};

// Exposed-minus-control difference of mean outcomes under the candidate
// assignment. Groups are formed from defined entries only; an empty group
// aborts with a diagnostic (a silently skipped resample would distort the
// randomization distribution).
Statistic make_diff_in_means(ExposureMap exposure,
                             Orientation orientation = Orientation::LargeIsExtreme);

// Which regression the exposure coefficient is adjusted by.
struct DesignMatrixSpec {
  bool intercept = true;
  bool cluster_factor = false;
  bool period_factor = false;
};

// Exposure coefficient of the least-squares fit on rows with defined outcomes.
// Factor columns are one-hot with the first-encountered level dropped; the fit
// uses a column-pivoted orthogonal decomposition and is deterministic.
Statistic make_ols_exposure_coeff(ExposureMap exposure, DesignMatrixSpec spec,
                                  std::vector<UnitPlacement> units,
                                  Orientation orientation = Orientation::LargeIsExtreme);

// Sum of defined outcomes over units exposed under the candidate (e.g. the
// treated-and-positive cell count when outcomes are binary).
Statistic make_exposed_sum(ExposureMap exposure,
                           Orientation orientation = Orientation::LargeIsExtreme);

// Mean of the given units' outcomes (0 when the set is empty: a powerless,
// never-failing statistic for heavily conditioned tests).
Statistic make_unit_mean(std::vector<std::size_t> units,
                         Orientation orientation = Orientation::LargeIsExtreme);

// Statistic selected per conditioning cell; used with the intersection method
// where the readable unit set is a function of the cell.
Statistic make_cell_statistic(std::string name, Orientation orientation,
                              std::function<Statistic(std::int64_t cell)> by_cell);

// Context handed to registered statistic factories when a statistic is built
// from a configuration by name.
struct StatisticContext {
  const ExposureMap* exposure = nullptr;
  const std::vector<UnitPlacement>* units = nullptr;
};

using StatisticFactory =
    std::function<Statistic(const StatisticContext&, Orientation)>;

class StatisticRegistry {
 public:
  // Duplicate names are a registration error.
  void register_statistic(const std::string& name, StatisticFactory factory,
                          Orientation default_orientation);
  Statistic make(const std::string& name, const StatisticContext& ctx,
                 std::optional<Orientation> orientation = std::nullopt) const;
  bool contains(const std::string& name) const;

  // Registry preloaded with t1 (difference in means), t2 (adjusts for
  // cluster), t3 (adjusts for cluster and period), exposed_sum, outcome_mean.
  static StatisticRegistry with_builtins();

 private:
  struct Entry {
    StatisticFactory factory;
    Orientation default_orientation;
  };
  std::map<std::string, Entry> entries_;
};

}  // namespace randinf
