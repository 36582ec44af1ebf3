#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "randinf/engine.hpp"

namespace randinf {

// Counts indexed as n[treatment z][outcome y].
struct TwoByTwoTable {
  std::int64_t n00 = 0;
  std::int64_t n01 = 0;
  std::int64_t n10 = 0;
  std::int64_t n11 = 0;
};

enum class FisherSide { Greater, Less, TwoSided };

// Hypergeometric probability of the table given both margins.
double fisher_point_probability(const TwoByTwoTable& table);

// Exact p-value: sum of point probabilities over tables with the same margins
// that are equally or more extreme. One-sided tails are taken in n11;
// two-sided sums the point probabilities not exceeding the observed one (one
// convention among several).
double fisher_exact(const TwoByTwoTable& table, FisherSide side = FisherSide::Greater);

// Statistic of an independence test, evaluated on a label vector paired with
// the fixed outcome vector.
struct PairedStatistic {
  std::string name;
  Orientation orientation = Orientation::SmallIsExtreme;
  std::function<double(const std::vector<int>&, const std::vector<double>&)> evaluate;
};

PairedStatistic paired_product_sum(Orientation orientation = Orientation::SmallIsExtreme);

// Permutation test of independence between z and y: exact over all N!
// relabelings when `resamples` is absent (requires N <= 8), Monte Carlo with
// the add-one estimator otherwise.
PValueReport independence_permutation_test(const std::vector<int>& z,
                                           const std::vector<double>& y,
                                           const PairedStatistic& statistic,
                                           std::optional<std::uint64_t> resamples,
                                           std::uint64_t seed);

// Known per-unit conditional law of the treatment label given covariates:
// labels[l] is drawn with probability law(i, l) for unit i.
struct ConditionalLaw {
  std::vector<int> labels;
  std::function<double(std::size_t unit, std::size_t label_index)> probability;
};

// Quasi-randomization test of conditional independence. Unconditionally,
// each unit's label is resampled from its own law; with order-statistics
// conditioning, resamples keep the observed label multiset (uniform
// permutations when the law is the same for every unit, conditional-Bernoulli
// sampling for binary labels).
PValueReport cond_independence_test(const std::vector<int>& z, const std::vector<double>& y,
                                    const ConditionalLaw& law, const PairedStatistic& statistic,
                                    std::uint64_t resamples, std::uint64_t seed,
                                    bool condition_on_order_statistics = false);

// Residual-magnitude procedure: fit a model to all rows and return the N
// absolute residuals. Must be invariant to reordering its input rows.
using ConformalScoreFn =
    std::function<std::vector<double>(const Matrix& x, const std::vector<double>& y)>;

// Absolute residuals of the least-squares fit of y on x with an intercept.
std::vector<double> least_squares_residual_score(const Matrix& x, const std::vector<double>& y);

// Absolute deviations from the mean of y (an intercept-only fit).
std::vector<double> mean_residual_score(const Matrix& x, const std::vector<double>& y);

struct ConformalProblem {
  Matrix x;               // N rows; row N-1 is the point being predicted
  std::vector<double> y;  // length N; y[N-1] is a placeholder
  ConformalScoreFn score = least_squares_residual_score;
  // Densities over covariate rows for the shifted sampling scheme. Required
  // for the weighted variants.
  std::function<double(const std::vector<double>&)> reference_density;  // pi1
  std::function<double(const std::vector<double>&)> target_density;    // pi2
};

// Rank-based p-value for Y_N = y_candidate: refit with the candidate filled in
// and count the share of residuals at least as large as the candidate's. The
// candidate's own residual counts, so p >= 1/N.
double conformal_p_value(const ConformalProblem& problem, double y_candidate);

// Density-ratio weights w_i proportional to pi2(x_i) / pi1(x_i); sum to 1.
std::vector<double> weighted_conformal_weights(const ConformalProblem& problem);

// Weighted analogue of conformal_p_value under covariate shift.
double weighted_conformal_p_value(const ConformalProblem& problem, double y_candidate);

struct ConformalPredictionSet {
  std::vector<double> grid;
  std::vector<std::uint8_t> retained;
  double lower = 0.0;  // hull of retained candidates; NaN if empty
  double upper = 0.0;
  bool empty = false;
  bool contiguous = true;
};

// Level-(1 - alpha) prediction set {y : p(y) > alpha} evaluated on a candidate
// grid spanning the known outcomes plus/minus 3 standard deviations.
ConformalPredictionSet conformal_prediction_set(const ConformalProblem& problem, double alpha,
                                                std::size_t grid_points = 513,
                                                bool weighted = false);

}  // namespace randinf
