#include "randinf/conditioning.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

namespace randinf {

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

Partition Partition::from_cell_ids(std::vector<std::uint32_t> raw) {
  // densify ids in first-encounter order
  Partition p;
  p.cell_of_.resize(raw.size());
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = remap.emplace(raw[i], static_cast<std::uint32_t>(remap.size()));
    p.cell_of_[i] = it->second;
  }
  p.n_cells_ = static_cast<std::uint32_t>(remap.size());

  std::vector<std::size_t> counts(p.n_cells_, 0);
  for (auto c : p.cell_of_) ++counts[c];
  p.offsets_.assign(p.n_cells_ + 1, 0);
  for (std::uint32_t c = 0; c < p.n_cells_; ++c) p.offsets_[c + 1] = p.offsets_[c] + counts[c];
  p.members_flat_.resize(p.cell_of_.size());
  std::vector<std::size_t> cursor(p.offsets_.begin(), p.offsets_.end() - 1);
  for (std::size_t i = 0; i < p.cell_of_.size(); ++i)
    p.members_flat_[cursor[p.cell_of_[i]]++] = i;
  return p;
}

std::span<const std::uint64_t> Partition::members(std::uint32_t cell) const {
  return {members_flat_.data() + offsets_[cell], offsets_[cell + 1] - offsets_[cell]};
}

Partition partition_by_function(const AssignmentModel& model,
                                const std::function<std::int64_t(const Assignment&)>& g) {
  model.require_enumerable("partition_by_function");
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(model.size()));
  std::unordered_map<std::int64_t, std::uint32_t> key_to_id;
  for (std::uint64_t i = 0; i < model.size(); ++i) {
    const auto key = g(model.at(i));
    auto [it, inserted] = key_to_id.emplace(key, static_cast<std::uint32_t>(key_to_id.size()));
    ids[static_cast<std::size_t>(i)] = it->second;
  }
  return Partition::from_cell_ids(std::move(ids));
}

namespace {

Partition partition_by_vector_key(const AssignmentModel& model,
                                  const std::function<std::vector<int>(const Assignment&)>& key,
                                  const char* what) {
  model.require_enumerable(what);
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(model.size()));
  std::map<std::vector<int>, std::uint32_t> key_to_id;
  std::uint32_t next = 0;
  for (std::uint64_t i = 0; i < model.size(); ++i) {
    auto k = key(model.at(i));
    auto it = key_to_id.find(k);
    if (it == key_to_id.end()) it = key_to_id.emplace(std::move(k), next++).first;
    ids[static_cast<std::size_t>(i)] = it->second;
  }
  return Partition::from_cell_ids(std::move(ids));
}

}  // namespace

Partition partition_by_order_statistics(const AssignmentModel& model) {
  return partition_by_vector_key(
      model,
      [](const Assignment& z) {
        std::vector<int> sorted(z);
        std::sort(sorted.begin(), sorted.end());
        return sorted;
      },
      "partition_by_order_statistics");
}

Partition partition_by_focal_units(const AssignmentModel& model, const ExposureMap& exposure,
                                   const std::vector<std::size_t>& focal) {
  if (focal.empty()) throw ConfigError("focal unit set must be nonempty");
  return partition_by_vector_key(
      model,
      [&exposure, &focal](const Assignment& z) {
        const auto d = exposure.profile(z);
        std::vector<int> key(focal.size());
        for (std::size_t k = 0; k < focal.size(); ++k) key[k] = d[focal[k]];
        return key;
      },
      "partition_by_focal_units");
}

Partition trivial_partition(const AssignmentModel& model) {
  model.require_enumerable("trivial_partition");
  return Partition::from_cell_ids(
      std::vector<std::uint32_t>(static_cast<std::size_t>(model.size()), 0));
}

std::variant<Partition, ConditioningRejection> validate_conditioning_map(
    const AssignmentModel& model,
    const std::function<std::vector<Assignment>(const Assignment&)>& proposal) {
  model.require_enumerable("validate_conditioning_map");
  const std::uint64_t n = model.size();
  std::vector<std::vector<std::uint64_t>> sets(static_cast<std::size_t>(n));
  auto set_of = [&](std::uint64_t i) -> std::variant<const std::vector<std::uint64_t>*,
                                                     ConditioningRejection> {
    auto& cached = sets[static_cast<std::size_t>(i)];
    if (!cached.empty()) return &cached;
    const Assignment z = model.at(i);
    std::vector<std::uint64_t> s;
    for (const auto& zs : proposal(z)) {
      const auto idx = model.index_of(zs);
      if (!idx)
        return ConditioningRejection{z, zs, "proposed set contains an assignment outside the space"};
      s.push_back(*idx);
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    if (s.empty()) return ConditioningRejection{z, z, "proposed set is empty"};
    cached = std::move(s);
    return &cached;
  };

  std::vector<std::uint32_t> ids(static_cast<std::size_t>(n),
                                 std::numeric_limits<std::uint32_t>::max());
  std::uint32_t next_id = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto si = set_of(i);
    if (std::holds_alternative<ConditioningRejection>(si))
      return std::get<ConditioningRejection>(si);
    const auto& s = *std::get<const std::vector<std::uint64_t>*>(si);

    if (!std::binary_search(s.begin(), s.end(), i))
      return ConditioningRejection{model.at(i), model.at(i),
                                   "assignment does not belong to its own proposed set"};
    for (std::uint64_t j : s) {
      auto sj = set_of(j);
      if (std::holds_alternative<ConditioningRejection>(sj))
        return std::get<ConditioningRejection>(sj);
      if (*std::get<const std::vector<std::uint64_t>*>(sj) != s)
        return ConditioningRejection{
            model.at(i), model.at(j),
            "member's proposed set differs from the proposing assignment's set"};
    }
    if (ids[static_cast<std::size_t>(i)] == std::numeric_limits<std::uint32_t>::max()) {
      for (std::uint64_t j : s) ids[static_cast<std::size_t>(j)] = next_id;
      ++next_id;
    }
  }
  return Partition::from_cell_ids(std::move(ids));
}

std::vector<std::size_t> intersection_units(const AssignmentModel& model,
                                            const Partition& partition,
                                            const NullHypothesis& null, std::uint32_t cell) {
  const auto members = partition.members(cell);
  const std::size_t n = null.n_units();
  std::vector<std::size_t> units;

  switch (null.mapping_form()) {
    case MappingForm::AllUnits: {
      units.resize(n);
      std::iota(units.begin(), units.end(), std::size_t{0});
      return units;
    }
    case MappingForm::ExposureLevels:
    case MappingForm::NullLevelOnly: {
      const bool need_zero = null.mapping_form() == MappingForm::NullLevelOnly;
      const auto first = null.exposure()->profile(model.at(members[0]));
      std::vector<std::uint8_t> keep(n, 1);
      if (need_zero)
        for (std::size_t i = 0; i < n; ++i) keep[i] = first[i] == 0;
      for (std::size_t m = 1; m < members.size(); ++m) {
        const auto d = null.exposure()->profile(model.at(members[m]));
        for (std::size_t i = 0; i < n; ++i)
          if (keep[i] && (need_zero ? d[i] != 0 : d[i] != first[i])) keep[i] = 0;
      }
      for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) units.push_back(i);
      return units;
    }
    case MappingForm::Custom: {
      std::vector<std::uint8_t> keep(n, 1);
      std::vector<Assignment> zs;
      zs.reserve(members.size());
      for (auto m : members) zs.push_back(model.at(m));
      for (const auto& a : zs)
        for (const auto& b : zs)
          for (std::size_t i = 0; i < n; ++i)
            if (keep[i] && !null.unit_imputable(i, a, b)) keep[i] = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) units.push_back(i);
      return units;
    }
  }
  return units;
}

// ---------------------------------------------------------------------------
// Post-randomized conditioning
// ---------------------------------------------------------------------------

ConditioningVariable::ConditioningVariable(std::vector<std::int64_t> support, KernelFn kernel)
    : support_(std::move(support)), kernel_(std::move(kernel)) {
  if (support_.empty()) throw ConfigError("conditioning variable needs a nonempty support");
  std::sort(support_.begin(), support_.end());
  support_.erase(std::unique(support_.begin(), support_.end()), support_.end());
}

double ConditioningVariable::kernel(const Assignment& z, std::int64_t g) const {
  return kernel_(z, g);
}

std::int64_t ConditioningVariable::draw(const Assignment& z, Rng& rng) const {
  double total = 0;
  std::vector<double> cumulative(support_.size());
  for (std::size_t i = 0; i < support_.size(); ++i) {
    const double p = kernel_(z, support_[i]);
    if (p < 0) throw ConfigError("conditioning kernel returned a negative probability");
    total += p;
    cumulative[i] = total;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("conditioning kernel probabilities sum to " + std::to_string(total) +
                      ", expected 1");
  const double u = rng.uniform() * total;
  for (std::size_t i = 0; i < cumulative.size(); ++i)
    if (u < cumulative[i]) return support_[i];
  return support_.back();
}

ConditioningVariable ConditioningVariable::deterministic(
    std::vector<std::int64_t> support, std::function<std::int64_t(const Assignment&)> g) {
  auto fn = std::make_shared<const std::function<std::int64_t(const Assignment&)>>(std::move(g));
  return ConditioningVariable(std::move(support),
                              [fn](const Assignment& z, std::int64_t value) {
                                return (*fn)(z) == value ? 1.0 : 0.0;
                              });
}

std::vector<double> bayes_conditional_density(const AssignmentModel& model,
                                              const ConditioningVariable& variable,
                                              std::int64_t g) {
  if (!std::binary_search(variable.support().begin(), variable.support().end(), g))
    throw InfeasibleError("conditioning value is outside the declared support");
  model.require_enumerable("bayes_conditional_density");
  std::vector<double> posterior(static_cast<std::size_t>(model.size()), 0.0);
  double denom = 0;
  for (std::uint64_t i = 0; i < model.size(); ++i) {
    const double mass = variable.kernel(model.at(i), g) * model.density(i);
    posterior[static_cast<std::size_t>(i)] = mass;
    denom += mass;
  }
  if (!(denom > 0))
    throw InfeasibleError("conditioning value has zero probability under the design");
  for (auto& p : posterior) p /= denom;
  return posterior;
}

// ---------------------------------------------------------------------------
// Null exposure graph and biclique decomposition
// ---------------------------------------------------------------------------

NullExposureGraph::NullExposureGraph(std::size_t n_units, std::uint64_t n_assignments)
    : n_units_(n_units),
      n_assignments_(n_assignments),
      words_per_row_((n_units + 63) / 64),
      rows_(static_cast<std::size_t>(n_assignments),
            std::vector<std::uint64_t>(words_per_row_, 0)) {}

NullExposureGraph NullExposureGraph::build(const AssignmentModel& model,
                                           const ExposureMap& exposure) {
  if (!exposure.has_zero_level())
    throw ConfigError("null exposure graph requires level 0 in the exposure alphabet");
  model.require_enumerable("null_exposure_graph");
  NullExposureGraph g(exposure.n_units(), model.size());
  for (std::uint64_t a = 0; a < model.size(); ++a) {
    const auto d = exposure.profile(model.at(a));
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] == 0) g.add_edge(i, a);
  }
  return g;
}

bool NullExposureGraph::has_edge(std::size_t unit, std::uint64_t assignment) const {
  return (rows_[static_cast<std::size_t>(assignment)][unit / 64] >> (unit % 64)) & 1u;
}

void NullExposureGraph::add_edge(std::size_t unit, std::uint64_t assignment) {
  rows_[static_cast<std::size_t>(assignment)][unit / 64] |= std::uint64_t{1} << (unit % 64);
}

std::uint64_t NullExposureGraph::edge_count() const {
  std::uint64_t total = 0;
  for (const auto& row : rows_)
    for (auto w : row) total += static_cast<std::uint64_t>(std::popcount(w));
  return total;
}

std::size_t NullExposureGraph::assignment_degree(std::uint64_t assignment) const {
  std::size_t d = 0;
  for (auto w : rows_[static_cast<std::size_t>(assignment)])
    d += static_cast<std::size_t>(std::popcount(w));
  return d;
}

std::vector<std::size_t> NullExposureGraph::unit_neighborhood(std::uint64_t assignment) const {
  std::vector<std::size_t> units;
  for (std::size_t i = 0; i < n_units_; ++i)
    if (has_edge(i, assignment)) units.push_back(i);
  return units;
}

const std::vector<std::uint64_t>& NullExposureGraph::row_words(std::uint64_t assignment) const {
  return rows_[static_cast<std::size_t>(assignment)];
}

void NullExposureGraph::write_edge_list(std::ostream& out) const {
  out << "units=" << n_units_ << " assignments=" << n_assignments_ << "\n";
  for (std::uint64_t a = 0; a < n_assignments_; ++a)
    for (std::size_t i = 0; i < n_units_; ++i)
      if (has_edge(i, a)) out << i << "\t" << a << "\n";
}

NullExposureGraph NullExposureGraph::read_edge_list(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("edge list: missing header line");
  std::size_t n_units = 0;
  std::uint64_t n_assignments = 0;
  {
    std::istringstream hs(header);
    std::string u_field, a_field;
    hs >> u_field >> a_field;
    if (u_field.rfind("units=", 0) != 0 || a_field.rfind("assignments=", 0) != 0)
      throw DataError("edge list: malformed header, expected 'units=<N> assignments=<M>'");
    try {
      n_units = std::stoull(u_field.substr(6));
      n_assignments = std::stoull(a_field.substr(12));
    } catch (const std::exception&) {
      throw DataError("edge list: malformed header counts");
    }
  }
  NullExposureGraph g(n_units, n_assignments);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t unit;
    std::uint64_t assignment;
    if (!(ls >> unit >> assignment))
      throw DataError("edge list line " + std::to_string(line_no) + ": expected 'unit\tassignment'");
    if (unit >= n_units || assignment >= n_assignments)
      throw DataError("edge list line " + std::to_string(line_no) + ": index out of range");
    g.add_edge(unit, assignment);
  }
  return g;
}

namespace {

using Words = std::vector<std::uint64_t>;

std::size_t words_popcount(const Words& w) {
  std::size_t n = 0;
  for (auto x : w) n += static_cast<std::size_t>(std::popcount(x));
  return n;
}

Words words_and(const Words& a, const Words& b) {
  Words r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] & b[i];
  return r;
}

bool words_superset(const Words& big, const Words& small) {
  for (std::size_t i = 0; i < big.size(); ++i)
    if ((big[i] & small[i]) != small[i]) return false;
  return true;
}

struct Candidate {
  Words units;
  std::size_t unit_count = 0;
  std::vector<std::uint64_t> assignments;  // sorted

  std::uint64_t area() const { return unit_count * assignments.size(); }
};

// area desc, then unit side desc, then lexicographically smaller assignment side
bool better(const Candidate& a, const Candidate& b) {
  if (a.area() != b.area()) return a.area() > b.area();
  if (a.unit_count != b.unit_count) return a.unit_count > b.unit_count;
  return a.assignments < b.assignments;
}

// All assignments in `remaining` whose neighborhoods contain `units`.
std::vector<std::uint64_t> closure(const NullExposureGraph& g,
                                   const std::vector<std::uint64_t>& remaining,
                                   const Words& units) {
  std::vector<std::uint64_t> s;
  for (auto a : remaining)
    if (words_superset(g.row_words(a), units)) s.push_back(a);
  return s;
}

constexpr std::size_t kExactAssignmentBound = 24;
constexpr std::size_t kExactNodeBudget = 4'000'000;

// Branch and bound over distinct neighborhood intersections. Exact for the
// (area, unit side, lexicographic) objective within the node budget.
class ExactSearch {
 public:
  ExactSearch(const NullExposureGraph& g, const std::vector<std::uint64_t>& remaining)
      : g_(g), remaining_(remaining) {}

  bool run(Candidate& best) {
    best_ = Candidate{};
    nodes_ = 0;
    Words universe(g_.row_words(0).size(), ~std::uint64_t{0});
    // mask tail bits beyond n_units
    const std::size_t tail = g_.n_units() % 64;
    if (tail != 0 && !universe.empty()) universe.back() = (std::uint64_t{1} << tail) - 1;
    if (g_.n_units() == 0 && !universe.empty()) universe.assign(universe.size(), 0);
    ok_ = true;
    dfs(0, universe);
    if (ok_) best = best_;
    return ok_;
  }

 private:
  void dfs(std::size_t start, const Words& units) {
    if (!ok_) return;
    if (++nodes_ > kExactNodeBudget) {
      ok_ = false;
      return;
    }
    const std::size_t ucount = words_popcount(units);
    if (ucount > 0) {
      Candidate c{units, ucount, closure(g_, remaining_, units)};
      if (!c.assignments.empty() && better(c, best_)) best_ = c;
    }
    for (std::size_t i = start; i < remaining_.size(); ++i) {
      const Words next = words_and(units, g_.row_words(remaining_[i]));
      const std::size_t ncount = words_popcount(next);
      if (ncount == 0) continue;
      if (ncount == ucount) continue;  // already inside the closure of `units`
      if (ncount * remaining_.size() < best_.area()) continue;
      dfs(i + 1, next);
    }
  }

  const NullExposureGraph& g_;
  const std::vector<std::uint64_t>& remaining_;
  Candidate best_;
  std::size_t nodes_ = 0;
  bool ok_ = true;
};

std::vector<std::uint64_t> remaining_set_difference(const std::vector<std::uint64_t>& remaining,
                                                    const std::vector<std::uint64_t>& chosen) {
  std::vector<std::uint64_t> out;
  out.reserve(remaining.size());
  for (auto a : remaining)
    if (!std::binary_search(chosen.begin(), chosen.end(), a)) out.push_back(a);
  return out;
}

Candidate heuristic_search(const NullExposureGraph& g,
                           const std::vector<std::uint64_t>& remaining) {
  // highest-degree seeds, grown greedily by resulting area
  std::vector<std::uint64_t> seeds(remaining);
  std::sort(seeds.begin(), seeds.end(), [&](std::uint64_t a, std::uint64_t b) {
    const auto da = g.assignment_degree(a), db = g.assignment_degree(b);
    if (da != db) return da > db;
    return a < b;
  });
  if (seeds.size() > 64) seeds.resize(64);

  Candidate best;
  for (auto seed : seeds) {
    Words units = g.row_words(seed);
    std::size_t ucount = words_popcount(units);
    if (ucount == 0) continue;
    std::vector<std::uint64_t> chosen{seed};
    for (;;) {
      std::uint64_t best_ext = 0;
      std::size_t best_count = 0;
      bool found = false;
      for (auto a : remaining_set_difference(remaining, chosen)) {
        const std::size_t c = words_popcount(words_and(units, g.row_words(a)));
        if (c == 0) continue;
        if (!found || c > best_count || (c == best_count && a < best_ext)) {
          best_ext = a;
          best_count = c;
          found = true;
        }
      }
      if (!found) break;
      if (best_count * (chosen.size() + 1) <= ucount * chosen.size()) break;
      units = words_and(units, g.row_words(best_ext));
      ucount = best_count;
      chosen.push_back(best_ext);
      std::sort(chosen.begin(), chosen.end());
    }
    Candidate c{units, ucount, closure(g, remaining, units)};
    if (!c.assignments.empty() && better(c, best)) best = c;
  }
  return best;
}

}  // namespace

std::vector<Biclique> biclique_decomposition(const NullExposureGraph& graph,
                                             std::size_t min_units) {
  std::vector<std::uint64_t> remaining(static_cast<std::size_t>(graph.n_assignments()));
  std::iota(remaining.begin(), remaining.end(), std::uint64_t{0});

  std::vector<Biclique> cells;
  while (!remaining.empty()) {
    Candidate best;
    bool have = false;
    if (remaining.size() <= kExactAssignmentBound) {
      ExactSearch search(graph, remaining);
      have = search.run(best);
    }
    if (!have) best = heuristic_search(graph, remaining);

    if (best.unit_count == 0 || best.assignments.empty()) {
      // no biclique with a nonempty unit side left: one cell per assignment
      for (auto a : remaining) {
        Biclique b;
        b.assignments = {a};
        b.units = graph.unit_neighborhood(a);
        b.low_power = b.units.size() < min_units;
        cells.push_back(std::move(b));
      }
      remaining.clear();
      break;
    }

    Biclique b;
    b.assignments = best.assignments;
    for (std::size_t i = 0; i < graph.n_units(); ++i)
      if ((best.units[i / 64] >> (i % 64)) & 1u) b.units.push_back(i);
    b.low_power = b.units.size() < min_units;
    cells.push_back(std::move(b));

    remaining = remaining_set_difference(remaining, best.assignments);
  }
  return cells;
}

bool is_biclique(const NullExposureGraph& graph, const Biclique& b) {
  for (std::size_t u : b.units)
    for (std::uint64_t a : b.assignments)
      if (!graph.has_edge(u, a)) return false;
  return true;
}

Partition partition_from_bicliques(const std::vector<Biclique>& cells,
                                   std::uint64_t space_size) {
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(space_size),
                                 std::numeric_limits<std::uint32_t>::max());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto a : cells[c].assignments) {
      auto& slot = ids[static_cast<std::size_t>(a)];
      if (slot != std::numeric_limits<std::uint32_t>::max())
        throw ConfigError("biclique assignment sides overlap; not a partition");
      slot = static_cast<std::uint32_t>(c);
    }
  }
  for (auto v : ids)
    if (v == std::numeric_limits<std::uint32_t>::max())
      throw ConfigError("biclique assignment sides do not cover the space");
  return Partition::from_cell_ids(std::move(ids));
}

}  // namespace randinf
