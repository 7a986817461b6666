#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace apci {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: grid specs, flags, effect files, missing columns.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Input data that cannot be analyzed as given.
class DataError : public Error {
public:
  using Error::Error;
};

class OutOfGridError : public DataError {
public:
  OutOfGridError(std::size_t record_id, const std::string& what)
      : DataError(what), record_id_(record_id) {}
  std::size_t record_id() const noexcept { return record_id_; }

private:
  std::size_t record_id_;
};

class EmptyCellsError : public DataError {
public:
  EmptyCellsError(std::vector<std::pair<int, int>> cells, const std::string& what)
      : DataError(what), cells_(std::move(cells)) {}
  // 1-based (age group, period) pairs.
  const std::vector<std::pair<int, int>>& cells() const noexcept { return cells_; }

private:
  std::vector<std::pair<int, int>> cells_;
};

// Numerical failures raised by the fitting layer.
class NumericalError : public Error {
public:
  using Error::Error;
};

class RankDeficientError : public NumericalError {
public:
  RankDeficientError(int rank, std::vector<int> aliased, const std::string& what)
      : NumericalError(what), rank_(rank), aliased_(std::move(aliased)) {}
  int rank() const noexcept { return rank_; }
  // Zero-based column indices that the pivoted decomposition could not resolve.
  const std::vector<int>& aliased_columns() const noexcept { return aliased_; }

private:
  int rank_;
  std::vector<int> aliased_;
};

class ConvergenceError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class SeparationError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class DegenerateContrastError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// A cohort has too few cells for the requested life-course contrast.
class ShortCohortError : public Error {
public:
  using Error::Error;
};

} // namespace apci
