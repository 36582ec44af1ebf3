#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "randinf/types.hpp"

namespace randinf {

// Unit-level exposure functions: expose(i, z) maps a unit and an assignment to
// a label in a countable alphabet. Level sets of these functions define which
// counterfactual outcomes a partially sharp null lets us reconstruct.
class ExposureMap {
 public:
  using UnitFn = std::function<int(std::size_t, const Assignment&)>;
  using ProfileFn = std::function<std::vector<int>(const Assignment&)>;

  ExposureMap(std::size_t n_units, std::vector<int> alphabet, UnitFn fn,
              ProfileFn profile = nullptr);

  int operator()(std::size_t unit, const Assignment& z) const;
  // All units at once; cheaper than n_units separate calls for structured maps.
  std::vector<int> profile(const Assignment& z) const;

  std::size_t n_units() const { return n_units_; }
  const std::vector<int>& alphabet() const { return alphabet_; }
  bool binary() const;
  bool has_zero_level() const;

 private:
  std::size_t n_units_;
  std::vector<int> alphabet_;  // sorted, distinct
  UnitFn fn_;
  ProfileFn profile_;
};

// D_i(z) = z_i: each unit's own binary treatment label.
ExposureMap identity_exposure(std::size_t n_units);

// Stepped-wedge crossover exposure. Assignments are crossover orders of the
// clusters; the cluster in position k of the order crosses over at period k+1,
// and every cluster is in the control condition during period 0. A unit is
// exposed (D = 1) when its cluster has crossed over by its period.
ExposureMap stepped_wedge_exposure(int n_clusters, int n_periods,
                                   std::vector<UnitPlacement> units);

// How a null's imputability mapping is represented. The engine and the
// intersection method dispatch on this; Custom falls back to the user mapping.
enum class MappingForm {
  AllUnits,        // every unit imputable for every pair
  ExposureLevels,  // units whose exposure agrees between the two assignments
  NullLevelOnly,   // units at exposure level 0 under both assignments
  Custom,
};

// A partially sharp null hypothesis: an imputability mapping H(z, z*) plus the
// rule that reconstructs counterfactual outcomes on the imputable set.
class NullHypothesis {
 public:
  using MappingFn = std::function<bool(std::size_t, const Assignment&, const Assignment&)>;
  using ImputeFn = std::function<PartialOutcomes(const ObservedData&, const Assignment&)>;

  bool unit_imputable(std::size_t unit, const Assignment& z, const Assignment& z_star) const;
  std::vector<std::size_t> imputable_units(const Assignment& z, const Assignment& z_star) const;

  // Counterfactual outcomes at `target`, defined exactly on the imputable set
  // for the pair (observed assignment, target).
  PartialOutcomes impute(const ObservedData& observed, const Assignment& target) const;

  MappingForm mapping_form() const { return form_; }
  // Exposure map backing the level-set structure; nullptr for fully sharp and
  // custom nulls.
  const ExposureMap* exposure() const { return exposure_ ? &*exposure_ : nullptr; }
  std::size_t n_units() const { return n_units_; }

  // Nulls supplied as a (mapping, impute) pair. Their mutual consistency is the
  // caller's claim; it is only checked by the schedule-equivalence oracle in
  // test code.
  static NullHypothesis custom(std::size_t n_units, MappingFn mapping, ImputeFn impute);

 private:
  friend NullHypothesis fisher_sharp_null(std::size_t);
  friend NullHypothesis constant_effect_null(ExposureMap, double);
  friend NullHypothesis spillover_null(ExposureMap);
  friend NullHypothesis level_set_null(ExposureMap);

  NullHypothesis() = default;

  std::size_t n_units_ = 0;
  MappingForm form_ = MappingForm::Custom;
  std::shared_ptr<const ExposureMap> exposure_;
  double tau_ = 0.0;        // constant-effect shift
  bool shift_rule_ = false;  // impute by the tau shift instead of pass-through
  MappingFn custom_mapping_;
  ImputeFn custom_impute_;
};

// No effect whatsoever: every counterfactual outcome equals the observed one.
NullHypothesis fisher_sharp_null(std::size_t n_units);

// Constant additive effect tau on a binary exposure:
// Y_i(z*) = Y_i + (D_i(z*) - D_i(Z)) * tau. Binary exposures make every unit
// imputable for every pair, so the mapping is the full unit set.
NullHypothesis constant_effect_null(ExposureMap exposure, double tau);

// No effect at the null exposure level: outcomes are imputable only for units
// at level 0 under both assignments.
NullHypothesis spillover_null(ExposureMap exposure);

// Outcomes depend on the assignment only through the exposure: imputable
// exactly where the two assignments give the unit equal exposure.
NullHypothesis level_set_null(ExposureMap exposure);

}  // namespace randinf
