#pragma once

#include <stdexcept>
#include <string>

namespace miss {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// CSV ingestion failure; `row()` is the 1-based data row (0 for header-level errors).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// An analytical function cannot be evaluated on the given data.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Logistic regression did not converge.
class ConvergenceError : public EvaluationError {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : EvaluationError(what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// Model fitting failure (too few records or rank-deficient design).
class FitError : public Error {
 public:
  enum class Kind { Underdetermined, DegenerateProfile, UndefinedR2 };
  FitError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace miss
