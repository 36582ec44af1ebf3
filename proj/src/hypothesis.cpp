#include "randinf/hypothesis.hpp"

#include <algorithm>
#include <string>

namespace randinf {

ExposureMap::ExposureMap(std::size_t n_units, std::vector<int> alphabet, UnitFn fn,
                         ProfileFn profile)
    : n_units_(n_units), alphabet_(std::move(alphabet)), fn_(std::move(fn)),
      profile_(std::move(profile)) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  if (alphabet_.empty()) throw ConfigError("exposure alphabet is empty");
}

int ExposureMap::operator()(std::size_t unit, const Assignment& z) const {
  return fn_(unit, z);
}

std::vector<int> ExposureMap::profile(const Assignment& z) const {
  if (profile_) return profile_(z);
  std::vector<int> d(n_units_);
  for (std::size_t i = 0; i < n_units_; ++i) d[i] = fn_(i, z);
  return d;
}

bool ExposureMap::binary() const { return alphabet_ == std::vector<int>{0, 1}; }

bool ExposureMap::has_zero_level() const {
  return std::binary_search(alphabet_.begin(), alphabet_.end(), 0);
}

ExposureMap identity_exposure(std::size_t n_units) {
  return ExposureMap(
      n_units, {0, 1},
      [](std::size_t i, const Assignment& z) { return z[i]; },
      [](const Assignment& z) { return std::vector<int>(z.begin(), z.end()); });
}

ExposureMap stepped_wedge_exposure(int n_clusters, int n_periods,
                                   std::vector<UnitPlacement> units) {
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].cluster < 0 || units[i].cluster >= n_clusters)
      throw DataError("unit " + std::to_string(i) + ": cluster index " +
                      std::to_string(units[i].cluster) + " out of range [0, " +
                      std::to_string(n_clusters) + ")");
    if (units[i].period < 0 || units[i].period >= n_periods)
      throw DataError("unit " + std::to_string(i) + ": period index " +
                      std::to_string(units[i].period) + " out of range [0, " +
                      std::to_string(n_periods) + ")");
  }
  auto placements = std::make_shared<const std::vector<UnitPlacement>>(std::move(units));
  const std::size_t n_units = placements->size();

  // crossover_period[c] = position of cluster c in the order, plus one.
  auto crossover_periods = [n_clusters](const Assignment& order) {
    if (static_cast<int>(order.size()) != n_clusters)
      throw DataError("crossover order has wrong length for this exposure map");
    std::vector<int> cross(static_cast<std::size_t>(n_clusters), 0);
    for (int pos = 0; pos < n_clusters; ++pos) {
      const int c = order[static_cast<std::size_t>(pos)];
      if (c < 0 || c >= n_clusters)
        throw DataError("crossover order contains an invalid cluster index");
      cross[static_cast<std::size_t>(c)] = pos + 1;
    }
    return cross;
  };

  auto unit_fn = [placements, crossover_periods](std::size_t i, const Assignment& order) {
    const auto cross = crossover_periods(order);
    const auto& u = (*placements)[i];
    return u.period >= cross[static_cast<std::size_t>(u.cluster)] ? 1 : 0;
  };
  auto profile_fn = [placements, crossover_periods, n_units](const Assignment& order) {
    const auto cross = crossover_periods(order);
    std::vector<int> d(n_units);
    for (std::size_t i = 0; i < n_units; ++i) {
      const auto& u = (*placements)[i];
      d[i] = u.period >= cross[static_cast<std::size_t>(u.cluster)] ? 1 : 0;
    }
    return d;
  };
  return ExposureMap(n_units, {0, 1}, std::move(unit_fn), std::move(profile_fn));
}

bool NullHypothesis::unit_imputable(std::size_t unit, const Assignment& z,
                                    const Assignment& z_star) const {
  switch (form_) {
    case MappingForm::AllUnits:
      return true;
    case MappingForm::ExposureLevels:
      return (*exposure_)(unit, z) == (*exposure_)(unit, z_star);
    case MappingForm::NullLevelOnly:
      return (*exposure_)(unit, z) == 0 && (*exposure_)(unit, z_star) == 0;
    case MappingForm::Custom:
      return custom_mapping_(unit, z, z_star);
  }
  return false;
}

std::vector<std::size_t> NullHypothesis::imputable_units(const Assignment& z,
                                                         const Assignment& z_star) const {
  std::vector<std::size_t> units;
  if (form_ == MappingForm::ExposureLevels || form_ == MappingForm::NullLevelOnly) {
    const auto dz = exposure_->profile(z);
    const auto ds = exposure_->profile(z_star);
    for (std::size_t i = 0; i < n_units_; ++i) {
      const bool ok = form_ == MappingForm::ExposureLevels ? dz[i] == ds[i]
                                                           : dz[i] == 0 && ds[i] == 0;
      if (ok) units.push_back(i);
    }
    return units;
  }
  for (std::size_t i = 0; i < n_units_; ++i)
    if (unit_imputable(i, z, z_star)) units.push_back(i);
  return units;
}

PartialOutcomes NullHypothesis::impute(const ObservedData& observed,
                                       const Assignment& target) const {
  if (observed.outcomes.size() != n_units_)
    throw DataError("observed outcome vector has length " +
                    std::to_string(observed.outcomes.size()) + ", expected " +
                    std::to_string(n_units_));
  if (form_ == MappingForm::Custom) return custom_impute_(observed, target);

  std::vector<double> values(n_units_, 0.0);
  std::vector<std::uint8_t> defined(n_units_, 0);
  if (shift_rule_) {
    const auto d_obs = exposure_->profile(observed.assignment);
    const auto d_tgt = exposure_->profile(target);
    for (std::size_t i = 0; i < n_units_; ++i) {
      values[i] = observed.outcomes[i] + (d_tgt[i] - d_obs[i]) * tau_;
      defined[i] = 1;
    }
    return PartialOutcomes(std::move(values), std::move(defined));
  }
  if (form_ == MappingForm::AllUnits) {
    return PartialOutcomes::full(observed.outcomes);
  }
  const auto d_obs = exposure_->profile(observed.assignment);
  const auto d_tgt = exposure_->profile(target);
  for (std::size_t i = 0; i < n_units_; ++i) {
    const bool ok = form_ == MappingForm::ExposureLevels
                        ? d_obs[i] == d_tgt[i]
                        : d_obs[i] == 0 && d_tgt[i] == 0;
    if (ok) {
      values[i] = observed.outcomes[i];
      defined[i] = 1;
    }
  }
  return PartialOutcomes(std::move(values), std::move(defined));
}

NullHypothesis NullHypothesis::custom(std::size_t n_units, MappingFn mapping, ImputeFn impute) {
  if (!mapping || !impute)
    throw ConfigError("custom null: both the mapping and the imputation rule are required");
  NullHypothesis h;
  h.n_units_ = n_units;
  h.form_ = MappingForm::Custom;
  h.custom_mapping_ = std::move(mapping);
  h.custom_impute_ = std::move(impute);
  return h;
}

NullHypothesis fisher_sharp_null(std::size_t n_units) {
  NullHypothesis h;
  h.n_units_ = n_units;
  h.form_ = MappingForm::AllUnits;
  return h;
}

NullHypothesis constant_effect_null(ExposureMap exposure, double tau) {
  if (!exposure.binary())
    throw ConfigError("constant-effect null requires a binary {0,1} exposure alphabet");
  NullHypothesis h;
  h.n_units_ = exposure.n_units();
  h.form_ = MappingForm::AllUnits;
  h.exposure_ = std::make_shared<const ExposureMap>(std::move(exposure));
  h.tau_ = tau;
  h.shift_rule_ = true;
  return h;
}

NullHypothesis spillover_null(ExposureMap exposure) {
  if (!exposure.has_zero_level())
    throw ConfigError("spillover null requires level 0 in the exposure alphabet");
  NullHypothesis h;
  h.n_units_ = exposure.n_units();
  h.form_ = MappingForm::NullLevelOnly;
  h.exposure_ = std::make_shared<const ExposureMap>(std::move(exposure));
  return h;
}

NullHypothesis level_set_null(ExposureMap exposure) {
  NullHypothesis h;
  h.n_units_ = exposure.n_units();
  h.form_ = MappingForm::ExposureLevels;
  h.exposure_ = std::make_shared<const ExposureMap>(std::move(exposure));
  return h;
}

}  // namespace randinf
