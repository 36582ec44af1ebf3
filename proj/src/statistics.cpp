#include "randinf/statistics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <numeric>

namespace randinf {

namespace {

struct Groups {
  std::vector<std::size_t> exposed;
  std::vector<std::size_t> control;
};

Groups split_by_exposure(const ExposureMap& exposure, const StatisticInput& in) {
  const auto d = exposure.profile(in.candidate);
  Groups g;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!in.outcomes.defined(i)) continue;
    (d[i] == 1 ? g.exposed : g.control).push_back(i);
  }
  return g;
}

[[noreturn]] void throw_degenerate(const char* which) {
  throw DegenerateStatisticError(
      std::string("difference in means is undefined: the ") + which +
      " group is empty among defined outcomes; condition on a partition that fixes "
      "group counts (e.g. order-statistics conditioning)");
}

// Design matrix over rows with defined outcomes. Column order: intercept,
// exposure, cluster dummies, period dummies (reference level = first
// encountered). Returns the matrix, the exposure column index and names.
struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::size_t> rows;  // unit index per matrix row
  std::vector<std::string> names;
  std::size_t exposure_col = 0;
};

Design build_design(const ExposureMap& exposure, const DesignMatrixSpec& spec,
                    const std::vector<UnitPlacement>& units, const StatisticInput& in) {
  Design d;
  const auto expo = exposure.profile(in.candidate);
  for (std::size_t i = 0; i < expo.size(); ++i)
    if (in.outcomes.defined(i)) d.rows.push_back(i);

  std::vector<int> cluster_levels, period_levels;
  if (spec.cluster_factor || spec.period_factor) {
    if (units.size() != expo.size())
      throw ConfigError("regression statistic: unit placement table has wrong length");
    for (std::size_t r : d.rows) {
      if (spec.cluster_factor &&
          std::find(cluster_levels.begin(), cluster_levels.end(), units[r].cluster) ==
              cluster_levels.end())
        cluster_levels.push_back(units[r].cluster);
      if (spec.period_factor &&
          std::find(period_levels.begin(), period_levels.end(), units[r].period) ==
              period_levels.end())
        period_levels.push_back(units[r].period);
    }
  }

  if (spec.intercept) d.names.push_back("intercept");
  d.exposure_col = d.names.size();
  d.names.push_back("exposure");
  // reference level (first encountered) dropped
  for (std::size_t l = 1; l < cluster_levels.size(); ++l)
    d.names.push_back("cluster[" + std::to_string(cluster_levels[l]) + "]");
  for (std::size_t l = 1; l < period_levels.size(); ++l)
    d.names.push_back("period[" + std::to_string(period_levels[l]) + "]");

  const std::size_t n = d.rows.size();
  const std::size_t p = d.names.size();
  d.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t unit = d.rows[r];
    std::size_t c = 0;
    if (spec.intercept) d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) = 1.0;
    d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) = expo[unit];
    for (std::size_t l = 1; l < cluster_levels.size(); ++l)
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) =
          units[unit].cluster == cluster_levels[l] ? 1.0 : 0.0;
    for (std::size_t l = 1; l < period_levels.size(); ++l)
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) =
          units[unit].period == period_levels[l] ? 1.0 : 0.0;
    d.y(static_cast<Eigen::Index>(r)) = in.outcomes.at(unit);
  }
  return d;
}

Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full_rank_qr(const Design& d) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
  const auto rank = qr.rank();
  if (rank < d.x.cols()) {
    // the pivots past the rank are the dependent columns
    std::vector<std::string> bad;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < d.x.cols(); ++j)
      bad.push_back(d.names[static_cast<std::size_t>(perm(j))]);
    std::string msg = "design matrix is rank deficient; dependent columns:";
    for (const auto& b : bad) msg += " " + b;
    throw CollinearityError(msg, bad);
  }
  return qr;
}

}  // namespace

Statistic make_diff_in_means(ExposureMap exposure, Orientation orientation) {
  auto expo = std::make_shared<const ExposureMap>(std::move(exposure));
  Statistic s;
  s.name = "diff_in_means";
  s.orientation = orientation;
  s.evaluate = [expo](const StatisticInput& in) {
    const Groups g = split_by_exposure(*expo, in);
    if (g.exposed.empty()) throw_degenerate("exposed");
    if (g.control.empty()) throw_degenerate("control");
    double se = 0, sc = 0;
    for (std::size_t i : g.exposed) se += in.outcomes.at(i);
    for (std::size_t i : g.control) sc += in.outcomes.at(i);
    return se / static_cast<double>(g.exposed.size()) -
           sc / static_cast<double>(g.control.size());
  };
  s.linear_weights = [expo](const StatisticInput& in) {
    const Groups g = split_by_exposure(*expo, in);
    if (g.exposed.empty()) throw_degenerate("exposed");
    if (g.control.empty()) throw_degenerate("control");
    std::vector<double> w(in.outcomes.size(), 0.0);
    for (std::size_t i : g.exposed) w[i] = 1.0 / static_cast<double>(g.exposed.size());
    for (std::size_t i : g.control) w[i] = -1.0 / static_cast<double>(g.control.size());
    return w;
  };
  return s;
}

Statistic make_ols_exposure_coeff(ExposureMap exposure, DesignMatrixSpec spec,
                                  std::vector<UnitPlacement> units, Orientation orientation) {
  auto expo = std::make_shared<const ExposureMap>(std::move(exposure));
  auto meta = std::make_shared<const std::vector<UnitPlacement>>(std::move(units));
  auto spec_p = std::make_shared<const DesignMatrixSpec>(spec);

  Statistic s;
  s.name = "ols_exposure_coeff";
  s.orientation = orientation;
  s.evaluate = [expo, meta, spec_p](const StatisticInput& in) {
    const Design d = build_design(*expo, *spec_p, *meta, in);
    auto qr = full_rank_qr(d);
    const Eigen::VectorXd coef = qr.solve(d.y);
    return coef(static_cast<Eigen::Index>(d.exposure_col));
  };
  s.linear_weights = [expo, meta, spec_p](const StatisticInput& in) {
    const Design d = build_design(*expo, *spec_p, *meta, in);
    auto qr = full_rank_qr(d);
    // coef = P R^{-1} Q^T y, so the weight vector for coefficient k is
    // w = Q [R^{-T} P^T e_k ; 0].
    const Eigen::Index p = d.x.cols();
    const Eigen::Index n = d.x.rows();
    Eigen::VectorXd ek = Eigen::VectorXd::Zero(p);
    ek(static_cast<Eigen::Index>(d.exposure_col)) = 1.0;
    const Eigen::VectorXd v = qr.colsPermutation().transpose() * ek;
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::VectorXd u = r.transpose().triangularView<Eigen::Lower>().solve(v);
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(n);
    padded.head(p) = u;
    const Eigen::VectorXd wq = qr.householderQ() * padded;
    std::vector<double> w(in.outcomes.size(), 0.0);
    for (std::size_t r2 = 0; r2 < d.rows.size(); ++r2)
      w[d.rows[r2]] = wq(static_cast<Eigen::Index>(r2));
    return w;
  };
  return s;
}

Statistic make_exposed_sum(ExposureMap exposure, Orientation orientation) {
  auto expo = std::make_shared<const ExposureMap>(std::move(exposure));
  Statistic s;
  s.name = "exposed_sum";
  s.orientation = orientation;
  s.evaluate = [expo](const StatisticInput& in) {
    const auto d = expo->profile(in.candidate);
    double sum = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] == 1) sum += in.outcomes.at(i);
    return sum;
  };
  s.linear_weights = [expo](const StatisticInput& in) {
    const auto d = expo->profile(in.candidate);
    std::vector<double> w(in.outcomes.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] == 1) w[i] = 1.0;
    return w;
  };
  return s;
}

Statistic make_unit_mean(std::vector<std::size_t> units, Orientation orientation) {
  auto set = std::make_shared<const std::vector<std::size_t>>(std::move(units));
  Statistic s;
  s.name = "unit_mean";
  s.orientation = orientation;
  s.evaluate = [set](const StatisticInput& in) {
    if (set->empty()) return 0.0;
    double sum = 0;
    for (std::size_t i : *set) sum += in.outcomes.at(i);
    return sum / static_cast<double>(set->size());
  };
  s.linear_weights = [set](const StatisticInput& in) {
    std::vector<double> w(in.outcomes.size(), 0.0);
    for (std::size_t i : *set) w[i] = 1.0 / static_cast<double>(set->size());
    return w;
  };
  return s;
}

Statistic make_cell_statistic(std::string name, Orientation orientation,
                              std::function<Statistic(std::int64_t)> by_cell) {
  auto fn = std::make_shared<const std::function<Statistic(std::int64_t)>>(std::move(by_cell));
  Statistic s;
  s.name = std::move(name);
  s.orientation = orientation;
  s.evaluate = [fn](const StatisticInput& in) { return (*fn)(in.cell).evaluate(in); };
  return s;
}

void StatisticRegistry::register_statistic(const std::string& name, StatisticFactory factory,
                                           Orientation default_orientation) {
  if (entries_.count(name))
    throw ConfigError("statistic name already registered: " + name);
  entries_[name] = Entry{std::move(factory), default_orientation};
}

Statistic StatisticRegistry::make(const std::string& name, const StatisticContext& ctx,
                                  std::optional<Orientation> orientation) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown statistic: " + name);
  const Orientation o = orientation.value_or(it->second.default_orientation);
  return it->second.factory(ctx, o);
}

bool StatisticRegistry::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

StatisticRegistry StatisticRegistry::with_builtins() {
  StatisticRegistry reg;
  auto need_exposure = [](const StatisticContext& ctx) -> const ExposureMap& {
    if (!ctx.exposure) throw ConfigError("this statistic requires an exposure map");
    return *ctx.exposure;
  };
  reg.register_statistic(
      "t1",
      [need_exposure](const StatisticContext& ctx, Orientation o) {
        return make_diff_in_means(need_exposure(ctx), o);
      },
      Orientation::LargeIsExtreme);
  reg.register_statistic(
      "t2",
      [need_exposure](const StatisticContext& ctx, Orientation o) {
        if (!ctx.units) throw ConfigError("t2 requires unit cluster/period metadata");
        return make_ols_exposure_coeff(need_exposure(ctx),
                                       DesignMatrixSpec{true, true, false}, *ctx.units, o);
      },
      Orientation::LargeIsExtreme);
  reg.register_statistic(
      "t3",
      [need_exposure](const StatisticContext& ctx, Orientation o) {
        if (!ctx.units) throw ConfigError("t3 requires unit cluster/period metadata");
        return make_ols_exposure_coeff(need_exposure(ctx),
                                       DesignMatrixSpec{true, true, true}, *ctx.units, o);
      },
      Orientation::LargeIsExtreme);
  reg.register_statistic(
      "exposed_sum",
      [need_exposure](const StatisticContext& ctx, Orientation o) {
        return make_exposed_sum(need_exposure(ctx), o);
      },
      Orientation::LargeIsExtreme);
  reg.register_statistic(
      "outcome_mean",
      [](const StatisticContext& ctx, Orientation o) {
        std::size_t n = ctx.exposure ? ctx.exposure->n_units()
                                     : (ctx.units ? ctx.units->size() : 0);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return make_unit_mean(std::move(all), o);
      },
      Orientation::LargeIsExtreme);
  return reg;
}

}  // namespace randinf
