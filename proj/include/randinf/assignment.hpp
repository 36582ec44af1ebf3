#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "randinf/rng.hpp"
#include "randinf/types.hpp"

namespace randinf {

// Explicit enumeration is refused beyond this many assignments. Sampling and
// density evaluation stay available at any size (the spaces are index-decoded,
// never materialized), so Monte Carlo work is not affected by the bound.
inline constexpr std::uint64_t kEnumerationBound = std::uint64_t{1} << 24;

// A finite assignment space together with its known density pi and a seeded
// generator. Immutable after construction and freely shareable across threads.
//
// Assignments are addressed by a stable index in [0, size()); at() decodes and
// index_of() encodes, so whole-space iteration never materializes the space.
class AssignmentModel {
 public:
  std::uint64_t size() const;
  std::size_t n_units() const;

  Assignment at(std::uint64_t index) const;
  std::optional<std::uint64_t> index_of(const Assignment& z) const;

  double density(std::uint64_t index) const;
  // 0 for assignments outside the space.
  double density(const Assignment& z) const;

  // True when pi is exactly uniform over the space.
  bool uniform_density() const;

  Assignment sample(Rng& rng) const;
  Assignment sample(std::uint64_t seed) const { Rng r(seed); return sample(r); }

  // Rejection region {z : balance(z) <= threshold}; density renormalized,
  // generator implemented by rejection from this model's generator.
  AssignmentModel restricted(const std::function<double(const Assignment&)>& balance,
                             double threshold) const;

  // Throws ConfigError when the space is too large to iterate; `operation`
  // names the caller in the message.
  void require_enumerable(const char* operation) const;

  // Hook for toy spaces and conditional densities.
  static AssignmentModel explicit_space(std::vector<Assignment> assignments,
                                        std::vector<double> probabilities);

  struct Impl;
  explicit AssignmentModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<const Impl> impl_;
};

// All binary vectors of length n_units with exactly n_treated ones; uniform.
AssignmentModel build_complete_randomization(int n_units, int n_treated);

// All binary vectors of length n_units; density prob^k (1-prob)^(n-k).
AssignmentModel build_bernoulli(int n_units, double prob);

// All permutations of {0,...,n_clusters-1}; uniform. The label at position k
// is the cluster that crosses over k-th.
AssignmentModel build_crossover_orders(int n_clusters);

}  // namespace randinf
