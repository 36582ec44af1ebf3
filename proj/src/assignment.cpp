#include "randinf/assignment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace randinf {

namespace {

// Binomial coefficients up to n = 64 (saturating well below uint64 overflow
// for the sizes this library accepts).
std::uint64_t binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

std::uint64_t factorial(int n) {
  std::uint64_t r = 1;
  for (int i = 2; i <= n; ++i) r *= static_cast<std::uint64_t>(i);
  return r;
}

bool is_binary(const Assignment& z) {
  return std::all_of(z.begin(), z.end(), [](int v) { return v == 0 || v == 1; });
}

}  // namespace

struct AssignmentModel::Impl {
  virtual ~Impl() = default;
  virtual std::uint64_t size() const = 0;
  virtual std::size_t n_units() const = 0;
  virtual Assignment at(std::uint64_t index) const = 0;
  virtual std::optional<std::uint64_t> index_of(const Assignment& z) const = 0;
  virtual double density(std::uint64_t index) const = 0;
  virtual bool uniform() const = 0;
  virtual Assignment sample(Rng& rng) const = 0;
};

namespace {

// ----- complete randomization: binary vectors with a fixed number of ones ---

class CompleteSpace final : public AssignmentModel::Impl {
 public:
  CompleteSpace(int n, int k) : n_(n), k_(k), count_(binom(n, k)) {}

  std::uint64_t size() const override { return count_; }
  std::size_t n_units() const override { return static_cast<std::size_t>(n_); }

  // Index = lexicographic rank of the set of treated positions.
  Assignment at(std::uint64_t index) const override {
    Assignment z(static_cast<std::size_t>(n_), 0);
    int start = 0;
    for (int slot = 0; slot < k_; ++slot) {
      for (int pos = start; pos < n_; ++pos) {
        const std::uint64_t block = binom(n_ - 1 - pos, k_ - 1 - slot);
        if (index < block) {
          z[static_cast<std::size_t>(pos)] = 1;
          start = pos + 1;
          break;
        }
        index -= block;
      }
    }
    return z;
  }

  std::optional<std::uint64_t> index_of(const Assignment& z) const override {
    if (z.size() != static_cast<std::size_t>(n_) || !is_binary(z)) return std::nullopt;
    if (std::accumulate(z.begin(), z.end(), 0) != k_) return std::nullopt;
    std::uint64_t rank = 0;
    int slot = 0, start = 0;
    for (int pos = 0; pos < n_; ++pos) {
      if (z[static_cast<std::size_t>(pos)] == 1) {
        for (int p = start; p < pos; ++p) rank += binom(n_ - 1 - p, k_ - 1 - slot);
        start = pos + 1;
        ++slot;
      }
    }
    return rank;
  }

  double density(std::uint64_t) const override { return 1.0 / static_cast<double>(count_); }
  bool uniform() const override { return true; }

  Assignment sample(Rng& rng) const override {
    std::vector<int> pool(static_cast<std::size_t>(n_));
    std::iota(pool.begin(), pool.end(), 0);
    Assignment z(static_cast<std::size_t>(n_), 0);
    for (int i = 0; i < k_; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(n_ - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      z[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = 1;
    }
    return z;
  }

 private:
  int n_, k_;
  std::uint64_t count_;
};

// ----- independent Bernoulli coordinates ------------------------------------

class BernoulliSpace final : public AssignmentModel::Impl {
 public:
  BernoulliSpace(int n, double p) : n_(n), p_(p) {}

  std::uint64_t size() const override { return std::uint64_t{1} << n_; }
  std::size_t n_units() const override { return static_cast<std::size_t>(n_); }

  Assignment at(std::uint64_t index) const override {
    Assignment z(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j) z[static_cast<std::size_t>(j)] = (index >> j) & 1u;
    return z;
  }

  std::optional<std::uint64_t> index_of(const Assignment& z) const override {
    if (z.size() != static_cast<std::size_t>(n_) || !is_binary(z)) return std::nullopt;
    std::uint64_t idx = 0;
    for (int j = 0; j < n_; ++j)
      if (z[static_cast<std::size_t>(j)] == 1) idx |= std::uint64_t{1} << j;
    return idx;
  }

  double density(std::uint64_t index) const override {
    const int ones = std::popcount(index);
    return std::pow(p_, ones) * std::pow(1.0 - p_, n_ - ones);
  }

  bool uniform() const override { return p_ == 0.5; }

  Assignment sample(Rng& rng) const override {
    Assignment z(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j) z[static_cast<std::size_t>(j)] = rng.bernoulli(p_) ? 1 : 0;
    return z;
  }

 private:
  int n_;
  double p_;
};

// ----- permutations of {0,...,n-1} ------------------------------------------

class PermutationSpace final : public AssignmentModel::Impl {
 public:
  explicit PermutationSpace(int n) : n_(n), count_(factorial(n)) {}

  std::uint64_t size() const override { return count_; }
  std::size_t n_units() const override { return static_cast<std::size_t>(n_); }

  // Index = lexicographic rank (factorial number system).
  Assignment at(std::uint64_t index) const override {
    std::vector<int> pool(static_cast<std::size_t>(n_));
    std::iota(pool.begin(), pool.end(), 0);
    Assignment z;
    z.reserve(static_cast<std::size_t>(n_));
    for (int i = n_ - 1; i >= 0; --i) {
      const std::uint64_t f = factorial(i);
      const std::size_t digit = static_cast<std::size_t>(index / f);
      index %= f;
      z.push_back(pool[digit]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(digit));
    }
    return z;
  }

  std::optional<std::uint64_t> index_of(const Assignment& z) const override {
    if (z.size() != static_cast<std::size_t>(n_)) return std::nullopt;
    std::vector<bool> seen(static_cast<std::size_t>(n_), false);
    for (int v : z) {
      if (v < 0 || v >= n_ || seen[static_cast<std::size_t>(v)]) return std::nullopt;
      seen[static_cast<std::size_t>(v)] = true;
    }
    std::uint64_t rank = 0;
    std::vector<int> pool(static_cast<std::size_t>(n_));
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto it = std::find(pool.begin(), pool.end(), z[i]);
      const auto digit = static_cast<std::uint64_t>(it - pool.begin());
      rank += digit * factorial(n_ - 1 - static_cast<int>(i));
      pool.erase(it);
    }
    return rank;
  }

  double density(std::uint64_t) const override { return 1.0 / static_cast<double>(count_); }
  bool uniform() const override { return true; }

  Assignment sample(Rng& rng) const override {
    Assignment z(static_cast<std::size_t>(n_));
    std::iota(z.begin(), z.end(), 0);
    rng.shuffle(z);
    return z;
  }

 private:
  int n_;
  std::uint64_t count_;
};

// ----- explicit toy spaces ---------------------------------------------------

class ExplicitSpace final : public AssignmentModel::Impl {
 public:
  ExplicitSpace(std::vector<Assignment> zs, std::vector<double> probs)
      : assignments_(std::move(zs)), probs_(std::move(probs)) {
    for (std::size_t i = 0; i < assignments_.size(); ++i) {
      if (!index_.emplace(assignments_[i], i).second)
        throw ConfigError("explicit assignment space contains duplicates");
    }
    uniform_ = true;
    for (double p : probs_)
      if (std::abs(p - probs_[0]) > 1e-15 * probs_[0]) uniform_ = false;
    cumulative_.resize(probs_.size());
    double acc = 0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += probs_[i];
      cumulative_[i] = acc;
    }
  }

  std::uint64_t size() const override { return assignments_.size(); }
  std::size_t n_units() const override {
    return assignments_.empty() ? 0 : assignments_[0].size();
  }
  Assignment at(std::uint64_t index) const override {
    return assignments_[static_cast<std::size_t>(index)];
  }
  std::optional<std::uint64_t> index_of(const Assignment& z) const override {
    const auto it = index_.find(z);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  double density(std::uint64_t index) const override {
    return probs_[static_cast<std::size_t>(index)];
  }
  bool uniform() const override { return uniform_; }

  Assignment sample(Rng& rng) const override {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    if (i >= assignments_.size()) i = assignments_.size() - 1;
    return assignments_[i];
  }

 private:
  std::vector<Assignment> assignments_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  std::map<Assignment, std::uint64_t> index_;
  bool uniform_ = true;
};

// ----- rejection region of a parent model ------------------------------------

class RestrictedSpace final : public AssignmentModel::Impl {
 public:
  RestrictedSpace(AssignmentModel parent, std::function<double(const Assignment&)> balance,
                  double threshold, std::vector<std::uint64_t> accepted, double mass,
                  bool uniform)
      : parent_(std::move(parent)),
        balance_(std::move(balance)),
        threshold_(threshold),
        accepted_(std::move(accepted)),
        mass_(mass),
        uniform_(uniform) {}

  std::uint64_t size() const override { return accepted_.size(); }
  std::size_t n_units() const override { return parent_.n_units(); }
  Assignment at(std::uint64_t index) const override {
    return parent_.at(accepted_[static_cast<std::size_t>(index)]);
  }

  std::optional<std::uint64_t> index_of(const Assignment& z) const override {
    const auto parent_idx = parent_.index_of(z);
    if (!parent_idx) return std::nullopt;
    const auto it = std::lower_bound(accepted_.begin(), accepted_.end(), *parent_idx);
    if (it == accepted_.end() || *it != *parent_idx) return std::nullopt;
    return static_cast<std::uint64_t>(it - accepted_.begin());
  }

  double density(std::uint64_t index) const override {
    return parent_.density(accepted_[static_cast<std::size_t>(index)]) / mass_;
  }

  bool uniform() const override { return uniform_; }

  Assignment sample(Rng& rng) const override {
    // Rejection from the parent generator.
    for (;;) {
      Assignment z = parent_.sample(rng);
      if (balance_(z) <= threshold_) return z;
    }
  }

 private:
  AssignmentModel parent_;
  std::function<double(const Assignment&)> balance_;
  double threshold_;
  std::vector<std::uint64_t> accepted_;  // sorted parent indices
  double mass_;
  bool uniform_;
};

}  // namespace

std::uint64_t AssignmentModel::size() const { return impl_->size(); }
std::size_t AssignmentModel::n_units() const { return impl_->n_units(); }
Assignment AssignmentModel::at(std::uint64_t index) const { return impl_->at(index); }
std::optional<std::uint64_t> AssignmentModel::index_of(const Assignment& z) const {
  return impl_->index_of(z);
}
double AssignmentModel::density(std::uint64_t index) const { return impl_->density(index); }
double AssignmentModel::density(const Assignment& z) const {
  const auto idx = index_of(z);
  return idx ? impl_->density(*idx) : 0.0;
}
bool AssignmentModel::uniform_density() const { return impl_->uniform(); }
Assignment AssignmentModel::sample(Rng& rng) const { return impl_->sample(rng); }

void AssignmentModel::require_enumerable(const char* operation) const {
  if (size() > kEnumerationBound)
    throw ConfigError(std::string(operation) + ": space has " + std::to_string(size()) +
                      " assignments, beyond the enumeration bound of " +
                      std::to_string(kEnumerationBound) +
                      "; use sampling (Monte Carlo) instead");
}

AssignmentModel AssignmentModel::restricted(
    const std::function<double(const Assignment&)>& balance, double threshold) const {
  require_enumerable("restricted");
  std::vector<std::uint64_t> accepted;
  double mass = 0.0;
  double first_density = -1.0;
  bool uniform = true;
  for (std::uint64_t i = 0; i < size(); ++i) {
    if (balance(at(i)) <= threshold) {
      accepted.push_back(i);
      const double d = density(i);
      mass += d;
      if (first_density < 0)
        first_density = d;
      else if (std::abs(d - first_density) > 1e-15 * first_density)
        uniform = false;
    }
  }
  if (accepted.empty())
    throw InfeasibleError("restriction is infeasible: no assignment satisfies balance <= " +
                          std::to_string(threshold));
  return AssignmentModel(std::make_shared<RestrictedSpace>(*this, balance, threshold,
                                                           std::move(accepted), mass, uniform));
}

AssignmentModel AssignmentModel::explicit_space(std::vector<Assignment> assignments,
                                                std::vector<double> probabilities) {
  if (assignments.empty()) throw ConfigError("explicit assignment space is empty");
  if (assignments.size() != probabilities.size())
    throw ConfigError("explicit assignment space: probability vector length mismatch");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p > 0.0)) throw ConfigError("assignment density must be strictly positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("assignment densities must sum to 1 (got " + std::to_string(total) + ")");
  const std::size_t len = assignments[0].size();
  for (const auto& z : assignments)
    if (z.size() != len) throw ConfigError("assignments must all have the same length");
  return AssignmentModel(
      std::make_shared<ExplicitSpace>(std::move(assignments), std::move(probabilities)));
}

AssignmentModel build_complete_randomization(int n_units, int n_treated) {
  if (n_units < 0 || n_units > 24)
    throw ConfigError("complete randomization: n_units must be in [0, 24], got " +
                      std::to_string(n_units));
  if (n_treated < 0 || n_treated > n_units)
    throw ConfigError("complete randomization: n_treated must be in [0, n_units]");
  return AssignmentModel(std::make_shared<CompleteSpace>(n_units, n_treated));
}

AssignmentModel build_bernoulli(int n_units, double prob) {
  if (n_units < 1 || n_units > 24)
    throw ConfigError("Bernoulli design: n_units must be in [1, 24], got " +
                      std::to_string(n_units));
  if (!(prob > 0.0) || !(prob < 1.0))
    throw ConfigError("Bernoulli design: prob must lie strictly inside (0, 1); "
                      "the assignment density must be positive everywhere");
  return AssignmentModel(std::make_shared<BernoulliSpace>(n_units, prob));
}

AssignmentModel build_crossover_orders(int n_clusters) {
  if (n_clusters < 2 || n_clusters > 8)
    throw ConfigError("crossover design: n_clusters must be in [2, 8], got " +
                      std::to_string(n_clusters));
  return AssignmentModel(std::make_shared<PermutationSpace>(n_clusters));
}

}  // namespace randinf
