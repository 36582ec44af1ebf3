#include "randinf/applications.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

namespace randinf {

namespace {

double log_factorial(std::int64_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

void check_table(const TwoByTwoTable& t) {
  if (t.n00 < 0 || t.n01 < 0 || t.n10 < 0 || t.n11 < 0)
    throw ConfigError("2x2 table entries must be nonnegative");
}

double point_probability(std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1,
                         std::int64_t n11) {
  const std::int64_t n01 = c1 - n11;
  const std::int64_t n10 = r1 - n11;
  const std::int64_t n00 = r0 - n01;
  const std::int64_t n = r0 + r1;
  const double logp = log_factorial(r0) + log_factorial(r1) + log_factorial(c0) +
                      log_factorial(c1) - log_factorial(n00) - log_factorial(n01) -
                      log_factorial(n10) - log_factorial(n11) - log_factorial(n);
  return std::exp(logp);
}

}  // namespace

double fisher_point_probability(const TwoByTwoTable& t) {
  check_table(t);
  return point_probability(t.n00 + t.n01, t.n10 + t.n11, t.n00 + t.n10, t.n01 + t.n11, t.n11);
}

double fisher_exact(const TwoByTwoTable& t, FisherSide side) {
  check_table(t);
  const std::int64_t r0 = t.n00 + t.n01;
  const std::int64_t r1 = t.n10 + t.n11;
  const std::int64_t c1 = t.n01 + t.n11;
  const std::int64_t lo = std::max<std::int64_t>(0, c1 - r0);
  const std::int64_t hi = std::min(r1, c1);

  const std::int64_t c0 = t.n00 + t.n10;
  double p = 0.0;
  switch (side) {
    case FisherSide::Greater:
      for (std::int64_t j = t.n11; j <= hi; ++j) p += point_probability(r0, r1, c0, c1, j);
      break;
    case FisherSide::Less:
      for (std::int64_t j = lo; j <= t.n11; ++j) p += point_probability(r0, r1, c0, c1, j);
      break;
    case FisherSide::TwoSided: {
      const double observed = point_probability(r0, r1, c0, c1, t.n11);
      for (std::int64_t j = lo; j <= hi; ++j) {
        const double q = point_probability(r0, r1, c0, c1, j);
        if (q <= observed * (1.0 + 1e-7)) p += q;
      }
      break;
    }
  }
  return std::min(p, 1.0);
}

PairedStatistic paired_product_sum(Orientation orientation) {
  PairedStatistic s;
  s.name = "product_sum";
  s.orientation = orientation;
  s.evaluate = [](const std::vector<int>& z, const std::vector<double>& y) {
    double sum = 0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += z[i] * y[i];
    return sum;
  };
  return s;
}

PValueReport independence_permutation_test(const std::vector<int>& z,
                                           const std::vector<double>& y,
                                           const PairedStatistic& statistic,
                                           std::optional<std::uint64_t> resamples,
                                           std::uint64_t seed) {
  if (z.size() != y.size())
    throw DataError("independence test: label and outcome vectors differ in length");
  const std::size_t n = z.size();
  PValueReport report;
  report.observed_stat = statistic.evaluate(z, y);
  const auto extreme = [&](double t) {
    return statistic.orientation == Orientation::SmallIsExtreme
               ? t <= report.observed_stat
               : t >= report.observed_stat;
  };

  if (!resamples) {
    if (n > 8)
      throw ConfigError("exact independence test enumerates all N! relabelings and "
                        "needs N <= 8; pass a resample count for Monte Carlo");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<int> zg(n);
    std::uint64_t total = 0, hits = 0;
    do {
      for (std::size_t i = 0; i < n; ++i) zg[i] = z[idx[i]];
      hits += extreme(statistic.evaluate(zg, y));
      ++total;
    } while (std::next_permutation(idx.begin(), idx.end()));
    report.mode = PValueMode::Exact;
    report.cell_size = total;
    report.p = static_cast<double>(hits) / static_cast<double>(total);
    return report;
  }

  Rng root(seed);
  std::uint64_t hits = 0;
  std::vector<int> zg(z);
  for (std::uint64_t b = 0; b < *resamples; ++b) {
    Rng rb = root.derive(b);
    zg = z;
    rb.shuffle(zg);
    hits += extreme(statistic.evaluate(zg, y));
  }
  report.mode = PValueMode::MonteCarlo;
  report.resamples = *resamples;
  report.seed = seed;
  report.p = static_cast<double>(1 + hits) / static_cast<double>(*resamples + 1);
  return report;
}

namespace {

std::size_t label_index_of(const ConditionalLaw& law, int label) {
  const auto it = std::find(law.labels.begin(), law.labels.end(), label);
  if (it == law.labels.end())
    throw DataError("observed label is not in the conditional law's alphabet");
  return static_cast<std::size_t>(it - law.labels.begin());
}

bool law_is_row_constant(const ConditionalLaw& law, std::size_t n) {
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t l = 0; l < law.labels.size(); ++l)
      if (std::abs(law.probability(i, l) - law.probability(0, l)) > 1e-12) return false;
  return true;
}

// Conditional-Bernoulli sampler: independent Bernoulli(q_i) conditioned on a
// fixed total, via the standard backward recursion
// tail[i][j] = P(sum of Z_i..Z_{n-1} = j).
class ConditionalBernoulli {
 public:
  ConditionalBernoulli(std::vector<double> q, std::size_t total)
      : q_(std::move(q)), total_(total) {
    const std::size_t n = q_.size();
    tail_.assign(n + 1, std::vector<double>(total_ + 2, 0.0));
    tail_[n][0] = 1.0;
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = 0; j <= total_; ++j) {
        double v = (1.0 - q_[i]) * tail_[i + 1][j];
        if (j > 0) v += q_[i] * tail_[i + 1][j - 1];
        tail_[i][j] = v;
      }
    }
    if (!(tail_[0][total_] > 0.0))
      throw InfeasibleError("observed treated count has probability 0 under the law");
  }

  std::vector<int> sample(Rng& rng) const {
    const std::size_t n = q_.size();
    std::vector<int> z(n, 0);
    std::size_t j = total_;
    for (std::size_t i = 0; i < n; ++i) {
      double p1 = 0.0;
      if (j > 0) p1 = q_[i] * tail_[i + 1][j - 1] / tail_[i][j];
      if (rng.uniform() < p1) {
        z[i] = 1;
        --j;
      }
    }
    return z;
  }

 private:
  std::vector<double> q_;
  std::size_t total_;
  std::vector<std::vector<double>> tail_;
};

}  // namespace

PValueReport cond_independence_test(const std::vector<int>& z, const std::vector<double>& y,
                                    const ConditionalLaw& law, const PairedStatistic& statistic,
                                    std::uint64_t resamples, std::uint64_t seed,
                                    bool condition_on_order_statistics) {
  if (z.size() != y.size())
    throw DataError("conditional independence test: vector length mismatch");
  const std::size_t n = z.size();
  PValueReport report;
  report.mode = PValueMode::MonteCarlo;
  report.resamples = resamples;
  report.seed = seed;
  report.observed_stat = statistic.evaluate(z, y);
  const auto extreme = [&](double t) {
    return statistic.orientation == Orientation::SmallIsExtreme
               ? t <= report.observed_stat
               : t >= report.observed_stat;
  };

  Rng root(seed);
  std::function<std::vector<int>(Rng&)> draw;

  if (!condition_on_order_statistics) {
    // cumulative row distributions
    auto cum = std::make_shared<std::vector<std::vector<double>>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      auto& row = (*cum)[i];
      row.resize(law.labels.size());
      for (std::size_t l = 0; l < law.labels.size(); ++l) {
        const double p = law.probability(i, l);
        if (p < 0) throw ConfigError("conditional law returned a negative probability");
        acc += p;
        row[l] = acc;
      }
      if (std::abs(acc - 1.0) > 1e-9)
        throw ConfigError("conditional law for unit " + std::to_string(i) +
                          " sums to " + std::to_string(acc));
    }
    draw = [cum, &law, n](Rng& r) {
      std::vector<int> out(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = r.uniform() * (*cum)[i].back();
        const auto& row = (*cum)[i];
        std::size_t l = static_cast<std::size_t>(
            std::lower_bound(row.begin(), row.end(), u) - row.begin());
        if (l >= row.size()) l = row.size() - 1;
        out[i] = law.labels[l];
      }
      return out;
    };
  } else if (law_is_row_constant(law, n)) {
    // conditioning on the order statistics of an exchangeable vector:
    // uniform permutations of the observed labels
    draw = [&z](Rng& r) {
      std::vector<int> out(z);
      r.shuffle(out);
      return out;
    };
  } else if (law.labels.size() == 2) {
    const std::size_t one = label_index_of(law, law.labels[1]);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = law.probability(i, one);
    std::size_t total = 0;
    for (int v : z) total += (v == law.labels[1]);
    auto cb = std::make_shared<ConditionalBernoulli>(std::move(q), total);
    const int l0 = law.labels[0], l1 = law.labels[1];
    draw = [cb, l0, l1, n](Rng& r) {
      const std::vector<int> bits = cb->sample(r);
      std::vector<int> out(n);
      for (std::size_t i = 0; i < n; ++i) out[i] = bits[i] ? l1 : l0;
      return out;
    };
  } else {
    throw ConfigError(
        "order-statistics conditioning is supported for row-constant laws and for "
        "binary labels; exact conditional resampling for general discrete laws is "
        "not available");
  }

  std::uint64_t hits = 0;
  for (std::uint64_t b = 0; b < resamples; ++b) {
    Rng rb = root.derive(b);
    hits += extreme(statistic.evaluate(draw(rb), y));
  }
  report.p = static_cast<double>(1 + hits) / static_cast<double>(resamples + 1);
  return report;
}

// ---------------------------------------------------------------------------
// Conformal prediction
// ---------------------------------------------------------------------------

std::vector<double> least_squares_residual_score(const Matrix& x, const std::vector<double>& y) {
  const std::size_t n = x.rows;
  const std::size_t p = x.cols + 1;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    a(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t c = 0; c < x.cols; ++c)
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) = x(r, c);
    b(static_cast<Eigen::Index>(r)) = y[r];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd resid = b - a * coef;
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = std::abs(resid(static_cast<Eigen::Index>(r)));
  return out;
}

std::vector<double> mean_residual_score(const Matrix&, const std::vector<double>& y) {
  double mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::abs(y[i] - mean);
  return out;
}

namespace {

std::vector<double> candidate_scores(const ConformalProblem& problem, double y_candidate) {
  if (problem.x.rows != problem.y.size() || problem.x.rows == 0)
    throw DataError("conformal problem: covariate and outcome row counts differ");
  std::vector<double> y(problem.y);
  y.back() = y_candidate;
  std::vector<double> scores = problem.score(problem.x, y);
  if (scores.size() != y.size())
    throw DataError("conformal score procedure returned the wrong number of residuals");
  return scores;
}

std::vector<double> x_row(const Matrix& x, std::size_t r) {
  std::vector<double> row(x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) row[c] = x(r, c);
  return row;
}

}  // namespace

double conformal_p_value(const ConformalProblem& problem, double y_candidate) {
  const std::vector<double> scores = candidate_scores(problem, y_candidate);
  const double rn = scores.back();
  std::size_t count = 0;
  for (double s : scores) count += (s >= rn);
  return static_cast<double>(count) / static_cast<double>(scores.size());
}

std::vector<double> weighted_conformal_weights(const ConformalProblem& problem) {
  if (!problem.reference_density || !problem.target_density)
    throw ConfigError("weighted conformal requires both reference and target densities");
  const std::size_t n = problem.x.rows;
  std::vector<double> w(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x_row(problem.x, i);
    const double p1 = problem.reference_density(row);
    if (!(p1 > 0.0))
      throw InfeasibleError("reference density must be positive at every observed covariate");
    w[i] = problem.target_density(row) / p1;
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

double weighted_conformal_p_value(const ConformalProblem& problem, double y_candidate) {
  const std::vector<double> w = weighted_conformal_weights(problem);
  const std::vector<double> scores = candidate_scores(problem, y_candidate);
  const double rn = scores.back();
  double p = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= rn) p += w[i];
  return p;
}

ConformalPredictionSet conformal_prediction_set(const ConformalProblem& problem, double alpha,
                                                std::size_t grid_points, bool weighted) {
  if (grid_points < 2) throw ConfigError("conformal candidate grid needs at least 2 points");
  const std::size_t n = problem.y.size();
  if (n < 2) throw DataError("conformal prediction needs at least 2 rows");

  // grid over the known outcomes' range, widened by 3 standard deviations
  double mean = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) mean += problem.y[i];
  mean /= static_cast<double>(n - 1);
  double var = 0;
  double lo = problem.y[0], hi = problem.y[0];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    var += (problem.y[i] - mean) * (problem.y[i] - mean);
    lo = std::min(lo, problem.y[i]);
    hi = std::max(hi, problem.y[i]);
  }
  var /= static_cast<double>(std::max<std::size_t>(n - 2, 1));
  const double sd = std::sqrt(var) > 0 ? std::sqrt(var) : 1.0;
  lo -= 3.0 * sd;
  hi += 3.0 * sd;

  ConformalPredictionSet set;
  set.grid.resize(grid_points);
  set.retained.resize(grid_points, 0);
  std::size_t first = grid_points, last = 0, count = 0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double y = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(grid_points - 1);
    set.grid[i] = y;
    const double p = weighted ? weighted_conformal_p_value(problem, y)
                              : conformal_p_value(problem, y);
    if (p > alpha) {
      set.retained[i] = 1;
      if (count == 0) first = i;
      last = i;
      ++count;
    }
  }
  if (count == 0) {
    set.empty = true;
    set.lower = std::numeric_limits<double>::quiet_NaN();
    set.upper = std::numeric_limits<double>::quiet_NaN();
  } else {
    set.lower = set.grid[first];
    set.upper = set.grid[last];
    set.contiguous = (last - first + 1) == count;
  }
  return set;
}

}  // namespace randinf
