#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "randinf/hypothesis.hpp"

using namespace randinf;

namespace {

// 4 units on a line; exposure = own treatment + number of treated neighbors.
ExposureMap line_exposure() {
  return ExposureMap(4, {0, 1, 2, 3}, [](std::size_t i, const Assignment& z) {
    int d = z[i];
    if (i > 0) d += z[i - 1];
    if (i + 1 < z.size()) d += z[i + 1];
    return d;
  });
}

std::vector<std::size_t> all_units(std::size_t n) {
  std::vector<std::size_t> u(n);
  std::iota(u.begin(), u.end(), std::size_t{0});
  return u;
}

}  // namespace

TEST_CASE("identity exposure reads the unit's own label") {
  const auto expo = identity_exposure(3);
  CHECK(expo(0, {1, 0, 1}) == 1);
  CHECK(expo(1, {1, 0, 1}) == 0);
  CHECK(expo.profile({1, 0, 1}) == std::vector<int>{1, 0, 1});
  CHECK(expo.binary());
}

TEST_CASE("stepped-wedge exposure follows the crossover rule") {
  // 4 clusters, 5 periods, one unit per (cluster, period)
  std::vector<UnitPlacement> units;
  for (int c = 0; c < 4; ++c)
    for (int t = 0; t < 5; ++t) units.push_back({c, t});
  const auto expo = stepped_wedge_exposure(4, 5, units);
  const auto orders = oracle::all_permutations(4);

  SUBCASE("period 0 is control under every order") {
    for (const auto& order : orders)
      for (std::size_t i = 0; i < units.size(); ++i)
        if (units[i].period == 0) CHECK(expo(i, order) == 0);
  }
  SUBCASE("first-placed cluster is exposed from period 1 on") {
    for (const auto& order : orders) {
      const int first = order[0];
      for (std::size_t i = 0; i < units.size(); ++i)
        if (units[i].cluster == first && units[i].period >= 1) CHECK(expo(i, order) == 1);
    }
  }
  SUBCASE("last-placed cluster is exposed only in the final period") {
    for (const auto& order : orders) {
      const int last = order[3];
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (units[i].cluster != last) continue;
        if (units[i].period == 4) CHECK(expo(i, order) == 1);
        if (units[i].period >= 1 && units[i].period <= 3) CHECK(expo(i, order) == 0);
      }
    }
  }
  SUBCASE("profile agrees with per-unit evaluation") {
    for (const auto& order : orders) {
      const auto d = expo.profile(order);
      for (std::size_t i = 0; i < units.size(); ++i) CHECK(d[i] == expo(i, order));
    }
  }
}

TEST_CASE("stepped-wedge exposure rejects out-of-range placements") {
  CHECK_THROWS_AS(stepped_wedge_exposure(4, 5, {{4, 0}}), DataError);
  CHECK_THROWS_AS(stepped_wedge_exposure(4, 5, {{0, 5}}), DataError);
  CHECK_THROWS_AS(stepped_wedge_exposure(4, 5, {{-1, 0}}), DataError);
}

TEST_CASE("fully sharp null imputes everything as observed") {
  const auto null = fisher_sharp_null(3);
  const Assignment z{1, 0, 1}, zs{0, 1, 0};
  CHECK(null.imputable_units(z, zs) == all_units(3));
  CHECK(null.imputable_units(zs, z) == all_units(3));

  ObservedData obs{z, {5.0, 6.0, 7.0}, std::nullopt};
  const auto imputed = null.impute(obs, zs);
  for (std::size_t i = 0; i < 3; ++i) CHECK(imputed.at(i) == obs.outcomes[i]);
}

TEST_CASE("constant-effect null shifts by the exposure difference") {
  const auto expo = identity_exposure(1);
  const auto null = constant_effect_null(expo, 2.0);
  ObservedData obs{{1}, {5.0}, std::nullopt};
  CHECK(null.impute(obs, {0}).at(0) == doctest::Approx(3.0));  // 5 + (0-1)*2
  CHECK(null.impute(obs, {1}).at(0) == 5.0);                   // same exposure level

  SUBCASE("tau = 0 reduces to the no-effect identity") {
    const auto zero = constant_effect_null(identity_exposure(4), 0.0);
    ObservedData data{{1, 0, 1, 0}, {1.5, 2.5, 3.5, 4.5}, std::nullopt};
    const auto imputed = zero.impute(data, {0, 1, 0, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(imputed.at(i) == data.outcomes[i]);
  }
  SUBCASE("every unit is imputable for every pair") {
    const auto ce = constant_effect_null(identity_exposure(4), 1.0);
    CHECK(ce.imputable_units({1, 0, 1, 0}, {0, 1, 1, 0}) == all_units(4));
  }
  SUBCASE("round trip recovers the observed outcomes exactly") {
    const auto ce = constant_effect_null(identity_exposure(4), 0.375);
    ObservedData data{{1, 0, 1, 0}, {1.25, -2.5, 3.0, 0.5}, std::nullopt};
    const Assignment target{0, 0, 1, 1};
    const auto there = ce.impute(data, target);
    ObservedData flipped{target, {}, std::nullopt};
    for (std::size_t i = 0; i < 4; ++i) flipped.outcomes.push_back(there.at(i));
    const auto back = ce.impute(flipped, data.assignment);
    for (std::size_t i = 0; i < 4; ++i) CHECK(back.at(i) == data.outcomes[i]);
  }
}

TEST_CASE("constant-effect null requires a binary exposure alphabet") {
  CHECK_THROWS_AS(constant_effect_null(line_exposure(), 1.0), ConfigError);
}

TEST_CASE("spillover null keeps only units at level zero under both assignments") {
  const auto expo = line_exposure();
  const auto null = spillover_null(expo);
  const Assignment z{1, 0, 0, 0};   // exposures 1,1,0,0
  const Assignment zs{0, 0, 0, 1};  // exposures 0,0,1,1
  CHECK(null.unit_imputable(2, z, {0, 0, 0, 0}));
  CHECK_FALSE(null.unit_imputable(2, z, zs));  // level 0 then level 1
  CHECK(null.imputable_units(z, zs).empty());

  ObservedData obs{z, {1.0, 2.0, 3.0, 4.0}, std::nullopt};
  const auto imputed = null.impute(obs, {0, 0, 0, 0});
  CHECK(imputed.at(2) == 3.0);
  CHECK(imputed.at(3) == 4.0);
  CHECK_THROWS_AS(imputed.at(0), ImputabilityError);

  SUBCASE("all units at level zero under both makes everything imputable") {
    const Assignment none{0, 0, 0, 0};
    CHECK(null.imputable_units(none, none) == all_units(4));
  }
}

TEST_CASE("spillover null requires the zero level") {
  const ExposureMap no_zero(2, {1, 2},
                            [](std::size_t, const Assignment&) { return 1; });
  CHECK_THROWS_AS(spillover_null(no_zero), ConfigError);
}

TEST_CASE("level-set mapping is symmetric and reflexive") {
  const auto null = level_set_null(line_exposure());
  const auto space = oracle::binary_vectors_with_sum(4, 2);
  for (const auto& a : space) {
    CHECK(null.imputable_units(a, a) == all_units(4));  // reflexive
    for (const auto& b : space)
      for (std::size_t i = 0; i < 4; ++i)
        CHECK(null.unit_imputable(i, a, b) == null.unit_imputable(i, b, a));  // symmetric
  }
}

TEST_CASE("imputation consistency at the observed assignment") {
  const Assignment z{1, 1, 0, 0};
  ObservedData obs{z, {4.0, 3.0, 2.0, 1.0}, std::nullopt};
  const std::vector<NullHypothesis> nulls = {
      fisher_sharp_null(4), constant_effect_null(identity_exposure(4), 1.5),
      spillover_null(line_exposure()), level_set_null(line_exposure())};
  for (const auto& null : nulls) {
    const auto imputed = null.impute(obs, z);
    for (std::size_t i : null.imputable_units(z, z)) CHECK(imputed.at(i) == obs.outcomes[i]);
  }
}

TEST_CASE("custom nulls carry the user's mapping and rule") {
  auto mapping = [](std::size_t i, const Assignment&, const Assignment&) { return i != 1; };
  auto impute = [](const ObservedData& obs, const Assignment&) {
    std::vector<double> v(obs.outcomes);
    std::vector<std::uint8_t> d(v.size(), 1);
    d[1] = 0;
    return PartialOutcomes(std::move(v), std::move(d));
  };
  const auto null = NullHypothesis::custom(3, mapping, impute);
  CHECK(null.mapping_form() == MappingForm::Custom);
  CHECK(null.imputable_units({0, 0, 0}, {1, 1, 1}) == std::vector<std::size_t>{0, 2});
  ObservedData obs{{0, 0, 0}, {1.0, 2.0, 3.0}, std::nullopt};
  CHECK_THROWS_AS(null.impute(obs, {1, 1, 1}).at(1), ImputabilityError);
  CHECK_THROWS_AS(NullHypothesis::custom(3, nullptr, impute), ConfigError);
}

TEST_CASE("partial outcome vectors guard undefined entries") {
  PartialOutcomes po({1.0, 2.0}, {1, 0});
  CHECK(po.at(0) == 1.0);
  CHECK(po.defined_count() == 1);
  CHECK_FALSE(po.defined(1));
  try {
    po.at(1);
    FAIL("expected an imputability error");
  } catch (const ImputabilityError& e) {
    CHECK(e.unit() == 1);
  }
  CHECK_THROWS_AS(PartialOutcomes({1.0}, {1, 0}), ConfigError);
}
