#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "randinf/assignment.hpp"
#include "randinf/hypothesis.hpp"
#include "randinf/rng.hpp"

namespace randinf {

// A validated partition of an assignment space, addressed by assignment index.
// Cells are disjoint, cover the space, and satisfy the invariance property by
// construction (every builder goes through an equivalence key). Cell ids are
// dense integers in enumeration order of first encounter.
class Partition {
 public:
  static Partition from_cell_ids(std::vector<std::uint32_t> cell_of);

  std::uint32_t n_cells() const { return n_cells_; }
  std::uint64_t space_size() const { return cell_of_.size(); }
  std::uint32_t cell_of(std::uint64_t assignment_index) const {
    return cell_of_[static_cast<std::size_t>(assignment_index)];
  }
  std::span<const std::uint64_t> members(std::uint32_t cell) const;

 private:
  std::vector<std::uint32_t> cell_of_;
  std::vector<std::uint64_t> members_flat_;  // grouped by cell
  std::vector<std::size_t> offsets_;         // n_cells + 1
  std::uint32_t n_cells_ = 0;
};

// Level sets of g (conditioning on a function of the assignment).
Partition partition_by_function(const AssignmentModel& model,
                                const std::function<std::int64_t(const Assignment&)>& g);

// Two assignments share a cell iff one is a coordinate permutation of the
// other (equal sorted label multisets): the classical permutation test.
Partition partition_by_order_statistics(const AssignmentModel& model);

// Level sets of the focal units' exposure profile.
Partition partition_by_focal_units(const AssignmentModel& model, const ExposureMap& exposure,
                                   const std::vector<std::size_t>& focal);

// One cell containing the whole space (an unconditional test).
Partition trivial_partition(const AssignmentModel& model);

// Witness returned when a proposed conditioning map is not a partition.
struct ConditioningRejection {
  Assignment z;
  Assignment z_star;
  std::string reason;
};

// Checks that a user-proposed map z -> S(z) is reflexive and invariant
// (z* in S(z) implies S(z*) = S(z)); accepts into a Partition or rejects with
// a concrete witness pair. Rejection is a result, not an exception.
std::variant<Partition, ConditioningRejection> validate_conditioning_map(
    const AssignmentModel& model,
    const std::function<std::vector<Assignment>(const Assignment&)>& proposal);

// Units imputable for every ordered pair of assignments in the cell (the
// intersection method). May legitimately be empty. Level-set mapping forms use
// the exposure-constancy shortcut; custom mappings fall back to the pairwise
// intersection.
std::vector<std::size_t> intersection_units(const AssignmentModel& model,
                                            const Partition& partition,
                                            const NullHypothesis& null, std::uint32_t cell);

// Analyst-introduced conditioning variable G = g(Z, V) with countable support
// and known kernel P(G = g | Z = z).
class ConditioningVariable {
 public:
  using KernelFn = std::function<double(const Assignment&, std::int64_t)>;

  ConditioningVariable(std::vector<std::int64_t> support, KernelFn kernel);

  const std::vector<std::int64_t>& support() const { return support_; }
  double kernel(const Assignment& z, std::int64_t g) const;
  std::int64_t draw(const Assignment& z, Rng& rng) const;

  // Deterministic G = g(Z): kernel is an indicator.
  static ConditioningVariable deterministic(std::vector<std::int64_t> support,
                                            std::function<std::int64_t(const Assignment&)> g);

 private:
  std::vector<std::int64_t> support_;
  KernelFn kernel_;
};

// pi(z | g) over the model's index space by Bayes' formula; entries sum to 1.
// Assignments with zero posterior mass get 0.
std::vector<double> bayes_conditional_density(const AssignmentModel& model,
                                              const ConditioningVariable& variable,
                                              std::int64_t g);

// Bipartite graph linking units to the assignments under which they sit at
// exposure level 0.
class NullExposureGraph {
 public:
  NullExposureGraph(std::size_t n_units, std::uint64_t n_assignments);
  static NullExposureGraph build(const AssignmentModel& model, const ExposureMap& exposure);

  std::size_t n_units() const { return n_units_; }
  std::uint64_t n_assignments() const { return n_assignments_; }
  bool has_edge(std::size_t unit, std::uint64_t assignment) const;
  void add_edge(std::size_t unit, std::uint64_t assignment);
  std::uint64_t edge_count() const;
  std::size_t assignment_degree(std::uint64_t assignment) const;

  // units at level 0 under the given assignment
  std::vector<std::size_t> unit_neighborhood(std::uint64_t assignment) const;

  // Edge-list text format: header "units=<N> assignments=<M>", then one
  // "unit<TAB>assignment" pair per line.
  void write_edge_list(std::ostream& out) const;
  static NullExposureGraph read_edge_list(std::istream& in);

  // one word-packed row per assignment, over units
  const std::vector<std::uint64_t>& row_words(std::uint64_t assignment) const;

 private:
  std::size_t n_units_;
  std::uint64_t n_assignments_;
  std::size_t words_per_row_;
  std::vector<std::vector<std::uint64_t>> rows_;  // rows_[assignment]
};

// Complete bipartite subgraph: every (unit, assignment) pair is an edge.
struct Biclique {
  std::vector<std::size_t> units;
  std::vector<std::uint64_t> assignments;
  bool low_power = false;  // unit side smaller than the requested minimum
};

// Greedy decomposition: repeatedly removes the largest biclique (by unit-count
// times assignment-count; ties broken by larger unit side, then by
// lexicographically smaller assignment side). Assignment sides partition the
// space; unit sides below min_units are returned flagged rather than dropped.
// Exact search runs when at most 24 assignments remain, a deterministic
// highest-degree-seeded heuristic otherwise.
std::vector<Biclique> biclique_decomposition(const NullExposureGraph& graph,
                                             std::size_t min_units = 0);

bool is_biclique(const NullExposureGraph& graph, const Biclique& b);

// Partition whose cells are the decomposition's assignment sides.
Partition partition_from_bicliques(const std::vector<Biclique>& cells,
                                   std::uint64_t space_size);

}  // namespace randinf
