#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace metabias {

// Two families: bad input (exit code 1 on the command line) and numerical
// failure (exit code 2).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Carries the 1-based data row (header excluded) where parsing failed.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t row, const std::string& what)
      : ValidationError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RankDeficientError : public ValidationError {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : ValidationError(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class EnumerationBoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BudgetError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateEnsembleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Optimizer or iterative-scheme failure; trace holds one line per attempt
// or iteration so callers can surface it.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<std::string> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<std::string>& trace() const noexcept { return trace_; }

 private:
  std::vector<std::string> trace_;
};

}  // namespace metabias
