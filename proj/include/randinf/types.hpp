#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace randinf {

// A treatment assignment: a finite sequence of integer labels. What a label
// means depends on the design (per-unit 0/1 treatment, a cluster crossover
// order, an observation ordering).
using Assignment = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters, violated bounds, unresolved names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (CSV schema, inconsistent columns, out-of-range ids).
class DataError : public Error {
 public:
  using Error::Error;
};

// A statistic read an outcome that is not imputable under the null.
class ImputabilityError : public Error {
 public:
  ImputabilityError(std::size_t unit, const std::string& msg)
      : Error(msg), unit_(unit) {}
  std::size_t unit() const { return unit_; }

 private:
  std::size_t unit_;
};

// A statistic is undefined on the supplied data (e.g. an empty exposure group).
class DegenerateStatisticError : public Error {
 public:
  using Error::Error;
};

// Empty restriction region, unreachable conditioning value, or a conditioning
// cell too improbable to resample.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient design matrix; carries the offending column names.
class CollinearityError : public Error {
 public:
  CollinearityError(std::string msg, std::vector<std::string> columns)
      : Error(std::move(msg)), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

// Small dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Where a unit sits in a clustered, multi-period design.
struct UnitPlacement {
  int cluster = 0;
  int period = 0;
};

// Outcome vector in which some entries may be undefined. Undefined entries are
// a first-class state: reading one throws, which turns the imputability
// requirement into a runtime check instead of a silent bug.
class PartialOutcomes {
 public:
  PartialOutcomes() = default;
  PartialOutcomes(std::vector<double> values, std::vector<std::uint8_t> defined)
      : values_(std::move(values)), defined_(std::move(defined)) {
    if (values_.size() != defined_.size())
      throw ConfigError("partial outcome vector: value/mask length mismatch");
  }

  static PartialOutcomes full(std::vector<double> values) {
    std::vector<std::uint8_t> mask(values.size(), 1);
    return PartialOutcomes(std::move(values), std::move(mask));
  }

  std::size_t size() const { return values_.size(); }
  bool defined(std::size_t i) const { return defined_[i] != 0; }

  double at(std::size_t i) const {
    if (i >= values_.size() || !defined_[i])
      throw ImputabilityError(i, "outcome of unit " + std::to_string(i) +
                                     " is not imputable under the null");
    return values_[i];
  }

  std::size_t defined_count() const {
    std::size_t n = 0;
    for (auto d : defined_) n += (d != 0);
    return n;
  }

 private:
  std::vector<double> values_;
  std::vector<std::uint8_t> defined_;
};

// Realized data of one experiment.
struct ObservedData {
  Assignment assignment;
  std::vector<double> outcomes;
  std::optional<Matrix> covariates;  // fixed X, one row per unit
};

// Full potential-outcomes table, used by simulators and test oracles only:
// evaluate(z) returns the length-N outcome vector the units would show under z.
struct OutcomeSchedule {
  std::size_t n_units = 0;
  std::function<std::vector<double>(const Assignment&)> evaluate;
};

}  // namespace randinf
