#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "randinf/statistics.hpp"

using namespace randinf;

namespace {

StatisticInput make_input(const Assignment& z, const PartialOutcomes& po,
                          std::int64_t cell = 0) {
  return StatisticInput{cell, z, po, nullptr};
}

std::vector<UnitPlacement> grid_placements(int clusters, int periods, int per_cell) {
  std::vector<UnitPlacement> units;
  for (int c = 0; c < clusters; ++c)
    for (int t = 0; t < periods; ++t)
      for (int k = 0; k < per_cell; ++k) units.push_back({c, t});
  return units;
}

}  // namespace

TEST_CASE("difference in means on simple groups") {
  const auto stat = make_diff_in_means(identity_exposure(4));
  const auto po = PartialOutcomes::full({1.0, 2.0, 3.0, 4.0});
  // exposed outcomes {2, 4}, control {1, 3}
  CHECK(stat.evaluate(make_input({0, 1, 0, 1}, po)) == doctest::Approx(1.0));

  const auto equal = PartialOutcomes::full({5.0, 5.0, 5.0, 5.0});
  CHECK(stat.evaluate(make_input({0, 1, 0, 1}, equal)) == doctest::Approx(0.0));
}

TEST_CASE("difference in means equals the two-term regression slope") {
  Rng rng(17);
  const auto stat = make_diff_in_means(identity_exposure(10));
  const auto ols = make_ols_exposure_coeff(identity_exposure(10), DesignMatrixSpec{},
                                           std::vector<UnitPlacement>(10));
  for (int trial = 0; trial < 100; ++trial) {
    Assignment z(10, 0);
    int treated = 0;
    for (auto& v : z) treated += (v = rng.bernoulli(0.5) ? 1 : 0);
    if (treated == 0 || treated == 10) continue;
    std::vector<double> y(10);
    for (auto& v : y) v = rng.normal();
    const auto po = PartialOutcomes::full(y);
    const double dim = stat.evaluate(make_input(z, po));
    const double coeff = ols.evaluate(make_input(z, po));
    CHECK(dim == doctest::Approx(coeff).epsilon(1e-10));
    // independent closed-form regression oracle
    std::vector<double> x(z.begin(), z.end());
    CHECK(dim == doctest::Approx(oracle::simple_ols_slope(x, y)).epsilon(1e-10));
  }
}

TEST_CASE("difference in means aborts on an empty group") {
  const auto stat = make_diff_in_means(identity_exposure(3));
  const auto po = PartialOutcomes::full({1.0, 2.0, 3.0});
  CHECK_THROWS_AS(stat.evaluate(make_input({1, 1, 1}, po)), DegenerateStatisticError);
  CHECK_THROWS_AS(stat.evaluate(make_input({0, 0, 0}, po)), DegenerateStatisticError);
}

TEST_CASE("regression statistic recovers exact fits") {
  const auto units = grid_placements(3, 4, 1);
  const auto expo = stepped_wedge_exposure(3, 4, units);
  const auto stat = make_ols_exposure_coeff(expo, DesignMatrixSpec{true, true, true}, units);

  const Assignment order{1, 0, 2};
  const auto d = expo.profile(order);
  // outcomes exactly linear in the design: cluster effect + period effect + 2.5 * exposure
  std::vector<double> y(units.size());
  for (std::size_t i = 0; i < units.size(); ++i)
    y[i] = 0.5 * units[i].cluster - 0.25 * units[i].period + 2.5 * d[i];
  const auto po = PartialOutcomes::full(y);
  const double coeff = stat.evaluate(make_input(order, po));
  CHECK(coeff == doctest::Approx(2.5).epsilon(1e-9));

  // exact fit: subtracting the non-exposure terms leaves pure exposure signal
  // with zero residual
  std::vector<double> pure(y);
  for (std::size_t i = 0; i < units.size(); ++i)
    pure[i] = y[i] - (0.5 * units[i].cluster - 0.25 * units[i].period);
  const auto po_pure = PartialOutcomes::full(pure);
  CHECK(stat.evaluate(make_input(order, po_pure)) == doctest::Approx(2.5).epsilon(1e-9));
  for (std::size_t i = 0; i < units.size(); ++i)
    CHECK(std::abs(pure[i] - 2.5 * d[i]) <= 1e-9);
}

TEST_CASE("regression statistic names collinear columns") {
  // constant exposure duplicates the intercept
  const ExposureMap always(4, {0, 1}, [](std::size_t, const Assignment&) { return 1; });
  const auto stat =
      make_ols_exposure_coeff(always, DesignMatrixSpec{}, std::vector<UnitPlacement>(4));
  const auto po = PartialOutcomes::full({1.0, 2.0, 3.0, 4.0});
  try {
    stat.evaluate(make_input({0, 0, 1, 1}, po));
    FAIL("expected a collinearity error");
  } catch (const CollinearityError& e) {
    CHECK_FALSE(e.columns().empty());
  }
}

TEST_CASE("normal equations hold at the fitted coefficient") {
  Rng rng(23);
  const auto units = grid_placements(4, 5, 1);
  const auto expo = stepped_wedge_exposure(4, 5, units);
  const auto stat = make_ols_exposure_coeff(expo, DesignMatrixSpec{true, true, true}, units);
  const auto orders = oracle::all_permutations(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Assignment& order = orders[rng.uniform_index(orders.size())];
    std::vector<double> y(units.size());
    for (auto& v : y) v = rng.normal();
    const auto po = PartialOutcomes::full(y);
    const auto in = make_input(order, po);
    const double direct = stat.evaluate(in);
    const auto w = stat.linear_weights(in);
    double via_weights = 0;
    for (std::size_t i = 0; i < y.size(); ++i) via_weights += w[i] * y[i];
    CHECK(direct == doctest::Approx(via_weights).epsilon(1e-8));

    // X^T (y - X beta) = 0 at the least-squares solution: rebuild the design
    // independently and solve the full coefficient vector from the weights of
    // per-column indicator responses
    const auto d = expo.profile(order);
    std::vector<std::vector<double>> cols;
    cols.push_back(std::vector<double>(y.size(), 1.0));                     // intercept
    cols.push_back(std::vector<double>(d.begin(), d.end()));                // exposure
    for (int level = 1; level < 4; ++level) {
      std::vector<double> c(y.size(), 0.0);
      for (std::size_t i = 0; i < y.size(); ++i) c[i] = units[i].cluster == level;
      cols.push_back(c);
    }
    for (int level = 1; level < 5; ++level) {
      std::vector<double> p(y.size(), 0.0);
      for (std::size_t i = 0; i < y.size(); ++i) p[i] = units[i].period == level;
      cols.push_back(p);
    }
    // beta from the normal equations solved by Gaussian elimination (oracle)
    const std::size_t pdim = cols.size();
    std::vector<std::vector<double>> a(pdim, std::vector<double>(pdim + 1, 0.0));
    for (std::size_t r = 0; r < pdim; ++r) {
      for (std::size_t c = 0; c < pdim; ++c)
        for (std::size_t i = 0; i < y.size(); ++i) a[r][c] += cols[r][i] * cols[c][i];
      for (std::size_t i = 0; i < y.size(); ++i) a[r][pdim] += cols[r][i] * y[i];
    }
    for (std::size_t col = 0; col < pdim; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < pdim; ++r)
        if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
      std::swap(a[col], a[piv]);
      for (std::size_t r = 0; r < pdim; ++r) {
        if (r == col) continue;
        const double f = a[r][col] / a[col][col];
        for (std::size_t c = col; c <= pdim; ++c) a[r][c] -= f * a[col][c];
      }
    }
    const double oracle_coeff = a[1][pdim] / a[1][1];  // exposure is column 1
    CHECK(direct == doctest::Approx(oracle_coeff).epsilon(1e-8));
  }
}

TEST_CASE("linear weight representations agree with direct evaluation") {
  Rng rng(31);
  const auto expo = identity_exposure(8);
  const std::vector<Statistic> stats = {
      make_diff_in_means(expo), make_exposed_sum(expo), make_unit_mean({1, 3, 5})};
  for (const auto& stat : stats) {
    for (int trial = 0; trial < 40; ++trial) {
      Assignment z(8, 0);
      for (std::size_t i = 0; i < 4; ++i) z[i] = 1;
      rng.shuffle(z);
      std::vector<double> y(8);
      for (auto& v : y) v = rng.normal();
      const auto po = PartialOutcomes::full(y);
      const auto in = make_input(z, po);
      const auto w = stat.linear_weights(in);
      double via = 0;
      for (std::size_t i = 0; i < 8; ++i) via += w[i] * y[i];
      CHECK(stat.evaluate(in) == doctest::Approx(via).epsilon(1e-10));
    }
  }
}

TEST_CASE("synthetic stepped-wedge recovers the injected effect on average") {
  const double tau = 0.8;
  const auto units = grid_placements(4, 5, 2);
  const auto expo = stepped_wedge_exposure(4, 5, units);
  const auto stat = make_ols_exposure_coeff(expo, DesignMatrixSpec{true, true, true}, units);
  Rng rng(1234);
  const auto orders = oracle::all_permutations(4);
  std::vector<double> estimates;
  for (int sim = 0; sim < 500; ++sim) {
    const Assignment& order = orders[rng.uniform_index(orders.size())];
    const auto d = expo.profile(order);
    std::vector<double> ward(4);
    for (auto& w : ward) w = rng.normal();
    std::vector<double> y(units.size());
    for (std::size_t i = 0; i < units.size(); ++i)
      y[i] = ward[static_cast<std::size_t>(units[i].cluster)] + 0.3 * units[i].period +
             tau * d[i] + rng.normal();
    estimates.push_back(stat.evaluate(make_input(order, PartialOutcomes::full(y))));
  }
  double mean = 0;
  for (double e : estimates) mean += e;
  mean /= static_cast<double>(estimates.size());
  double var = 0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  var /= static_cast<double>(estimates.size() - 1);
  const double se_mean = std::sqrt(var / static_cast<double>(estimates.size()));
  CHECK(std::abs(mean - tau) <= 3 * se_mean);
}

TEST_CASE("built-ins are permutation equivariant in the unit indexing") {
  Rng rng(41);
  const auto units = grid_placements(3, 4, 1);
  std::vector<std::size_t> perm(units.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);

  std::vector<UnitPlacement> permuted_units(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) permuted_units[i] = units[perm[i]];

  std::vector<double> y(units.size());
  for (auto& v : y) v = rng.normal();
  std::vector<double> permuted_y(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) permuted_y[i] = y[perm[i]];

  const Assignment order{2, 0, 1};
  const auto po = PartialOutcomes::full(y);
  const auto po_perm = PartialOutcomes::full(permuted_y);
  const auto in = make_input(order, po);
  const auto in_perm = make_input(order, po_perm);

  const auto expo = stepped_wedge_exposure(3, 4, units);
  const auto expo_perm = stepped_wedge_exposure(3, 4, permuted_units);

  CHECK(make_diff_in_means(expo).evaluate(in) ==
        doctest::Approx(make_diff_in_means(expo_perm).evaluate(in_perm)).epsilon(1e-12));
  CHECK(make_ols_exposure_coeff(expo, DesignMatrixSpec{true, true, true}, units).evaluate(in) ==
        doctest::Approx(make_ols_exposure_coeff(expo_perm, DesignMatrixSpec{true, true, true},
                                                permuted_units)
                            .evaluate(in_perm))
            .epsilon(1e-9));
}

TEST_CASE("statistic registry resolves names and rejects duplicates") {
  auto reg = StatisticRegistry::with_builtins();
  const auto expo = identity_exposure(4);
  const auto units = std::vector<UnitPlacement>(4);
  StatisticContext ctx{&expo, &units};

  SUBCASE("registered statistics behave like their factories") {
    const auto t1 = reg.make("t1", ctx);
    const auto direct = make_diff_in_means(identity_exposure(4));
    const auto po = PartialOutcomes::full({1.0, 2.0, 3.0, 4.0});
    CHECK(t1.evaluate(make_input({0, 1, 0, 1}, po)) ==
          direct.evaluate(make_input({0, 1, 0, 1}, po)));
  }
  SUBCASE("duplicate names are a registration error") {
    CHECK_THROWS_AS(reg.register_statistic(
                        "t1", [](const StatisticContext&, Orientation) { return Statistic{}; },
                        Orientation::LargeIsExtreme),
                    ConfigError);
  }
  SUBCASE("unknown names are a configuration error") {
    CHECK_THROWS_AS(reg.make("nope", ctx), ConfigError);
  }
  SUBCASE("custom registration round trips") {
    reg.register_statistic(
        "sum_all",
        [](const StatisticContext&, Orientation o) {
          Statistic s;
          s.name = "sum_all";
          s.orientation = o;
          s.evaluate = [](const StatisticInput& in) {
            double total = 0;
            for (std::size_t i = 0; i < in.outcomes.size(); ++i) total += in.outcomes.at(i);
            return total;
          };
          return s;
        },
        Orientation::SmallIsExtreme);
    const auto s = reg.make("sum_all", ctx);
    CHECK(s.evaluate(make_input({0, 0, 0, 0}, PartialOutcomes::full({1, 2, 3, 4}))) == 10.0);
    // the partial-vector guard fires when a registered statistic reads an
    // undefined entry
    PartialOutcomes partial({1.0, 2.0, 3.0, 4.0}, {1, 1, 0, 1});
    CHECK_THROWS_AS(s.evaluate(make_input({0, 0, 0, 0}, partial)), ImputabilityError);
  }
}

TEST_CASE("exposed-sum and unit-mean statistics") {
  const auto expo = identity_exposure(4);
  const auto po = PartialOutcomes::full({1.0, 2.0, 3.0, 4.0});
  CHECK(make_exposed_sum(expo).evaluate(make_input({1, 0, 0, 1}, po)) == 5.0);
  CHECK(make_unit_mean({0, 3}).evaluate(make_input({0, 0, 0, 0}, po)) == 2.5);
  CHECK(make_unit_mean({}).evaluate(make_input({0, 0, 0, 0}, po)) == 0.0);
}
