#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "randinf/applications.hpp"
#include "randinf/conditioning.hpp"

using namespace randinf;

namespace {

// exact integer factorial form of the table probability, for small counts
double factorial_form(const TwoByTwoTable& t) {
  auto fact = [](std::int64_t n) {
    double f = 1;
    for (std::int64_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
    return f;
  };
  const auto r0 = t.n00 + t.n01, r1 = t.n10 + t.n11;
  const auto c0 = t.n00 + t.n10, c1 = t.n01 + t.n11;
  return fact(r0) * fact(r1) * fact(c0) * fact(c1) /
         (fact(t.n00) * fact(t.n01) * fact(t.n10) * fact(t.n11) * fact(r0 + r1));
}

double binom(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  double r = 1;
  for (std::int64_t i = 1; i <= k; ++i)
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

TEST_CASE("table probability matches the factorial formula") {
  const TwoByTwoTable t{3, 1, 1, 3};
  CHECK(fisher_point_probability(t) == doctest::Approx(16.0 / 70).epsilon(1e-12));
  CHECK(fisher_point_probability(t) == doctest::Approx(factorial_form(t)).epsilon(1e-12));
}

TEST_CASE("the three equivalent forms of the table probability agree") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const TwoByTwoTable t{static_cast<std::int64_t>(rng.uniform_index(6)),
                          static_cast<std::int64_t>(rng.uniform_index(6)),
                          static_cast<std::int64_t>(rng.uniform_index(6)),
                          static_cast<std::int64_t>(rng.uniform_index(6))};
    const auto r0 = t.n00 + t.n01, r1 = t.n10 + t.n11;
    const auto c0 = t.n00 + t.n10, c1 = t.n01 + t.n11;
    const double form1 = binom(r0, t.n00) * binom(r1, t.n10) / binom(r0 + r1, c0);
    const double form2 = binom(r0, t.n01) * binom(r1, t.n11) / binom(r0 + r1, c1);
    const double p = fisher_point_probability(t);
    CHECK(p == doctest::Approx(form1).epsilon(1e-12));
    CHECK(p == doctest::Approx(form2).epsilon(1e-12));
  }
}

TEST_CASE("point probabilities over fixed margins sum to one") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::int64_t r0 = 1 + rng.uniform_index(8);
    const std::int64_t r1 = 1 + rng.uniform_index(8);
    const std::int64_t c1 = rng.uniform_index(r0 + r1 + 1);
    double total = 0;
    for (std::int64_t j = std::max<std::int64_t>(0, c1 - r0); j <= std::min(r1, c1); ++j) {
      const TwoByTwoTable t{r0 - (c1 - j), c1 - j, r1 - j, j};
      total += fisher_point_probability(t);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("tea tasting: perfect one-sided split is 1/70") {
  CHECK(fisher_exact({4, 0, 0, 4}, FisherSide::Greater) ==
        doctest::Approx(1.0 / 70).epsilon(1e-12));
  // enumeration oracle over all C(8,4) assignments with these outcomes
  const std::vector<double> y{0, 0, 0, 0, 1, 1, 1, 1};
  std::size_t more_extreme = 0, total = 0;
  for (const auto& z : oracle::binary_vectors_with_sum(8, 4)) {
    std::int64_t n11 = 0;
    for (std::size_t i = 0; i < 8; ++i) n11 += z[i] == 1 && y[i] == 1.0;
    more_extreme += n11 >= 4;
    ++total;
  }
  CHECK(static_cast<double>(more_extreme) / static_cast<double>(total) ==
        doctest::Approx(1.0 / 70).epsilon(1e-12));
}

TEST_CASE("one-sided tails and the two-sided convention") {
  const TwoByTwoTable t{3, 1, 1, 3};
  const double greater = fisher_exact(t, FisherSide::Greater);
  const double less = fisher_exact(t, FisherSide::Less);
  const double point = fisher_point_probability(t);
  CHECK(greater + less - point == doctest::Approx(1.0).epsilon(1e-12));
  const double two = fisher_exact(t, FisherSide::TwoSided);
  CHECK(two >= greater - 1e-12);
  CHECK(two <= 1.0);
  // degenerate margins: a single attainable table
  CHECK(fisher_exact({0, 0, 2, 3}, FisherSide::Greater) == 1.0);
  CHECK_THROWS_AS(fisher_exact({-1, 0, 0, 0}, FisherSide::Greater), ConfigError);
}

TEST_CASE("Fisher's test equals the conditional randomization engine path") {
  // Bernoulli assignment conditioned on the treated count, statistic n11
  const std::vector<TwoByTwoTable> tables{{3, 1, 1, 3}, {2, 2, 1, 4}, {1, 0, 2, 3}, {2, 3, 3, 1}};
  for (const auto& t : tables) {
    const int n = static_cast<int>(t.n00 + t.n01 + t.n10 + t.n11);
    std::vector<double> y;
    Assignment z;
    for (std::int64_t i = 0; i < t.n00; ++i) { z.push_back(0); y.push_back(0); }
    for (std::int64_t i = 0; i < t.n01; ++i) { z.push_back(0); y.push_back(1); }
    for (std::int64_t i = 0; i < t.n10; ++i) { z.push_back(1); y.push_back(0); }
    for (std::int64_t i = 0; i < t.n11; ++i) { z.push_back(1); y.push_back(1); }

    const auto model = build_bernoulli(n, 0.37);  // the prob cancels on the cell
    const auto partition = partition_by_function(model, [](const Assignment& a) {
      return std::accumulate(a.begin(), a.end(), std::int64_t{0});
    });
    const auto stat = make_exposed_sum(identity_exposure(static_cast<std::size_t>(n)),
                                       Orientation::LargeIsExtreme);
    const auto report = exact_p_value(model, partition, fisher_sharp_null(static_cast<std::size_t>(n)),
                                      stat, ObservedData{z, y, std::nullopt});
    CHECK(report.p == doctest::Approx(fisher_exact(t, FisherSide::Greater)).epsilon(1e-12));
  }
}

TEST_CASE("independence permutation test") {
  SUBCASE("exact path equals the engine's order-statistics CRT") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 5;
      std::vector<int> z(n);
      for (auto& v : z) v = static_cast<int>(rng.uniform_index(2));
      if (std::accumulate(z.begin(), z.end(), 0) == 0) z[0] = 1;
      if (std::accumulate(z.begin(), z.end(), 0) == static_cast<int>(n)) z[0] = 0;
      std::vector<double> y(n);
      for (auto& v : y) v = rng.normal();

      const auto stat = paired_product_sum();
      const auto direct = independence_permutation_test(z, y, stat, std::nullopt, 0);

      // engine path: uniform over distinct rearrangements, one order-stats cell
      std::vector<Assignment> space;
      Assignment sorted(z);
      std::sort(sorted.begin(), sorted.end());
      do {
        space.push_back(sorted);
      } while (std::next_permutation(sorted.begin(), sorted.end()));
      const auto model = AssignmentModel::explicit_space(
          space, std::vector<double>(space.size(), 1.0 / static_cast<double>(space.size())));
      const auto partition = partition_by_order_statistics(model);
      Statistic engine_stat;
      engine_stat.name = "product_sum";
      engine_stat.orientation = Orientation::SmallIsExtreme;
      engine_stat.evaluate = [](const StatisticInput& in) {
        double s = 0;
        for (std::size_t i = 0; i < in.candidate.size(); ++i)
          s += in.candidate[i] * in.outcomes.at(i);
        return s;
      };
      const auto via_engine =
          exact_p_value(model, partition, fisher_sharp_null(n), engine_stat,
                        ObservedData{z, y, std::nullopt});
      CHECK(direct.p == via_engine.p);  // exact equality of the two routes
    }
  }
  SUBCASE("constant outcomes or labels force p = 1") {
    const auto stat = paired_product_sum();
    CHECK(independence_permutation_test({1, 0, 1}, {2.0, 2.0, 2.0}, stat, std::nullopt, 0).p ==
          1.0);
    CHECK(independence_permutation_test({1, 1, 1}, {1.0, 2.0, 3.0}, stat, std::nullopt, 0).p ==
          1.0);
  }
  SUBCASE("a joint relabeling of (z, y) leaves the exact p unchanged") {
    std::vector<int> z{1, 0, 0, 1, 0, 1};
    std::vector<double> y{0.4, -1.0, 2.2, 0.9, -0.3, 1.4};
    const auto stat = paired_product_sum();
    const double p0 = independence_permutation_test(z, y, stat, std::nullopt, 0).p;
    Rng rng(8);
    std::vector<std::size_t> perm(z.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<int> z2(z.size());
    std::vector<double> y2(y.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z2[i] = z[perm[i]];
      y2[i] = y[perm[i]];
    }
    CHECK(independence_permutation_test(z2, y2, stat, std::nullopt, 0).p == p0);
  }
  SUBCASE("exact mode refuses N > 8") {
    std::vector<int> z(9, 0);
    z[0] = 1;
    std::vector<double> y(9, 0.0);
    CHECK_THROWS_AS(independence_permutation_test(z, y, paired_product_sum(), std::nullopt, 0),
                    ConfigError);
  }
  SUBCASE("Monte Carlo mode approaches the exact value") {
    std::vector<int> z{1, 0, 0, 1, 0, 1};
    std::vector<double> y{0.4, -1.0, 2.2, 0.9, -0.3, 1.4};
    const auto stat = paired_product_sum();
    const double exact = independence_permutation_test(z, y, stat, std::nullopt, 0).p;
    const auto mc = independence_permutation_test(z, y, stat, 20'000, 3);
    CHECK(std::abs(mc.p - exact) <= 3 * std::sqrt(exact * (1 - exact) / 20'000.0) + 1e-4);
  }
}

TEST_CASE("conditional independence quasi-randomization test") {
  SUBCASE("a covariate-free law reduces to the permutation test") {
    std::vector<int> z{1, 0, 0, 1, 0, 1, 1, 0};
    std::vector<double> y{0.4, -1.0, 2.2, 0.9, -0.3, 1.4, 0.1, -0.8};
    ConditionalLaw law{{0, 1}, [](std::size_t, std::size_t) { return 0.5; }};
    const auto stat = paired_product_sum();
    const auto conditional = cond_independence_test(z, y, law, stat, 20'000, 5, true);
    // reference: exact permutation p-value over rearrangements of z
    std::vector<Assignment> space;
    Assignment sorted(z.begin(), z.end());
    std::sort(sorted.begin(), sorted.end());
    double hits = 0, total = 0;
    double t_obs = 0;
    for (std::size_t i = 0; i < z.size(); ++i) t_obs += z[i] * y[i];
    do {
      double t = 0;
      for (std::size_t i = 0; i < y.size(); ++i) t += sorted[i] * y[i];
      hits += t <= t_obs;
      ++total;
    } while (std::next_permutation(sorted.begin(), sorted.end()));
    const double exact = hits / total;
    CHECK(std::abs(conditional.p - exact) <=
          3 * std::sqrt(exact * (1 - exact) / 20'000.0) + 1e-4);
  }
  SUBCASE("order-statistics conditioning with binary labels keeps the treated count") {
    // covariate-dependent law: exercised through the conditional-Bernoulli path
    const std::size_t n = 12;
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = 0.2 + 0.05 * static_cast<double>(i);
    ConditionalLaw law{{0, 1}, [q](std::size_t i, std::size_t l) {
                         return l == 1 ? q[i] : 1.0 - q[i];
                       }};
    std::vector<int> z(n, 0);
    z[1] = z[4] = z[7] = z[9] = 1;
    std::vector<double> y(n);
    Rng rng(2);
    for (auto& v : y) v = rng.normal();
    // p-value with a statistic that counts the treated: every conditional
    // resample keeps the count, so everything ties and p = 1
    PairedStatistic count;
    count.name = "count";
    count.orientation = Orientation::SmallIsExtreme;
    count.evaluate = [](const std::vector<int>& zz, const std::vector<double>&) {
      return static_cast<double>(std::accumulate(zz.begin(), zz.end(), 0));
    };
    CHECK(cond_independence_test(z, y, law, count, 2000, 7, true).p == 1.0);
  }
  SUBCASE("type I control when the outcome ignores the treatment") {
    Rng rng(31);
    const std::size_t n = 30;
    const auto stat = paired_product_sum(Orientation::LargeIsExtreme);
    int rejections = 0;
    const int sims = 5000;
    for (int s = 0; s < sims; ++s) {
      std::vector<double> x(n), y(n);
      std::vector<int> z(n);
      std::vector<double> q(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        q[i] = 1.0 / (1.0 + std::exp(-x[i]));
        z[i] = rng.bernoulli(q[i]) ? 1 : 0;
        y[i] = x[i] + rng.normal();  // depends on x, not on z
      }
      ConditionalLaw law{{0, 1}, [&q](std::size_t i, std::size_t l) {
                           return l == 1 ? q[i] : 1.0 - q[i];
                         }};
      const auto r = cond_independence_test(z, y, law, stat, 99, 5000 + s, false);
      rejections += r.p <= 0.05;
    }
    CHECK(rejections / static_cast<double>(sims) <=
          0.05 + 3 * std::sqrt(0.05 * 0.95 / sims));
  }
  SUBCASE("power against a direct dependence") {
    Rng rng(77);
    const std::size_t n = 200;
    const auto stat = paired_product_sum(Orientation::LargeIsExtreme);
    int rejections = 0;
    const int sims = 200;
    for (int s = 0; s < sims; ++s) {
      std::vector<double> y(n);
      std::vector<int> z(n);
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = rng.bernoulli(0.5) ? 1 : 0;
        y[i] = z[i] + rng.normal();
      }
      ConditionalLaw law{{0, 1}, [](std::size_t, std::size_t) { return 0.5; }};
      const auto r = cond_independence_test(z, y, law, stat, 199, 100 + s, false);
      rejections += r.p <= 0.05;
    }
    CHECK(rejections / static_cast<double>(sims) > 0.9);
  }
  SUBCASE("general laws with order-statistics conditioning are rejected") {
    ConditionalLaw law{{0, 1, 2}, [](std::size_t i, std::size_t l) {
                         return (l == i % 3) ? 0.6 : 0.2;
                       }};
    CHECK_THROWS_AS(cond_independence_test({0, 1, 2}, {1.0, 2.0, 3.0}, law,
                                           paired_product_sum(), 10, 1, true),
                    ConfigError);
  }
}

TEST_CASE("conformal p-values") {
  SUBCASE("equal residuals give p = 1") {
    ConformalProblem problem;
    problem.x = Matrix(4, 1);
    problem.y = {2.0, 2.0, 2.0, 0.0};
    problem.score = mean_residual_score;
    // with candidate 2.0 every residual is 0
    CHECK(conformal_p_value(problem, 2.0) == 1.0);
  }
  SUBCASE("a strictly largest candidate residual gives p = 1/N") {
    ConformalProblem problem;
    const std::size_t n = 10;
    problem.x = Matrix(n, 1);
    problem.y.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      problem.x(i, 0) = static_cast<double>(i);
      problem.y[i] = 0.01 * static_cast<double>(i);
    }
    problem.x(n - 1, 0) = 4.0;
    problem.score = mean_residual_score;
    CHECK(conformal_p_value(problem, 1e6) == doctest::Approx(1.0 / n));
  }
  SUBCASE("p is a nonincreasing step function of the candidate residual") {
    Rng rng(12);
    ConformalProblem problem;
    const std::size_t n = 15;
    problem.x = Matrix(n, 1);
    problem.y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      problem.x(i, 0) = rng.normal();
      problem.y[i] = 2.0 * problem.x(i, 0) + 0.3 * rng.normal();
    }
    const double center = 2.0 * problem.x(n - 1, 0);
    double last_p = 1.0;
    for (double step = 0.0; step <= 5.0; step += 0.25) {
      const double p = conformal_p_value(problem, center + step);
      CHECK(p <= last_p + 1e-12);
      last_p = p;
    }
  }
  SUBCASE("density-ratio weights") {
    ConformalProblem problem;
    problem.x = Matrix(2, 1);
    problem.x(0, 0) = 0.0;
    problem.x(1, 0) = 1.0;
    problem.y = {0.0, 0.0};
    problem.reference_density = [](const std::vector<double>&) { return 1.0; };
    problem.target_density = [](const std::vector<double>& v) {
      return v[0] == 0.0 ? 1.0 : 3.0;
    };
    const auto w = weighted_conformal_weights(problem);
    CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-12));

    // scale invariance
    ConformalProblem scaled = problem;
    scaled.target_density = [](const std::vector<double>& v) {
      return 10.0 * (v[0] == 0.0 ? 1.0 : 3.0);
    };
    const auto w2 = weighted_conformal_weights(scaled);
    CHECK(w2[0] == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(w2[1] == doctest::Approx(w[1]).epsilon(1e-12));

    // equal densities give uniform weights, and the weighted p-value reduces
    // to the unweighted one
    ConformalProblem equal = problem;
    equal.target_density = equal.reference_density;
    const auto we = weighted_conformal_weights(equal);
    CHECK(we[0] == doctest::Approx(0.5).epsilon(1e-12));
    double total = 0;
    for (double v : we) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    ConformalProblem bad = problem;
    bad.reference_density = [](const std::vector<double>& v) {
      return v[0] == 0.0 ? 0.0 : 1.0;
    };
    CHECK_THROWS_AS(weighted_conformal_weights(bad), InfeasibleError);
  }
  SUBCASE("a failing score procedure propagates its error") {
    ConformalProblem problem;
    problem.x = Matrix(3, 1);
    problem.y = {1.0, 2.0, 0.0};
    problem.score = [](const Matrix&, const std::vector<double>&) -> std::vector<double> {
      throw DataError("fit failed");
    };
    CHECK_THROWS_AS(conformal_p_value(problem, 0.5), DataError);
    // wrong residual count is caught too
    problem.score = [](const Matrix&, const std::vector<double>&) {
      return std::vector<double>{1.0};
    };
    CHECK_THROWS_AS(conformal_p_value(problem, 0.5), DataError);
  }
  SUBCASE("prediction sets cover the middle of a clean linear relation") {
    Rng rng(5);
    ConformalProblem problem;
    const std::size_t n = 20;
    problem.x = Matrix(n, 1);
    problem.y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      problem.x(i, 0) = rng.normal();
      problem.y[i] = 1.5 * problem.x(i, 0) + 0.1 * rng.normal();
    }
    const auto set = conformal_prediction_set(problem, 0.1, 257);
    CHECK_FALSE(set.empty);
    const double truth = 1.5 * problem.x(n - 1, 0);
    CHECK(set.lower <= truth);
    CHECK(set.upper >= truth);
  }
}
