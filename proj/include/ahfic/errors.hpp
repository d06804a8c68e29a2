#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ahfic {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file: missing or unparseable fields.
class IngestError : public Error {
 public:
  IngestError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Well-formed input that violates a contract (negative time, bad status,
/// contradictory protection rules, ...). `row` is 0 when not row-specific.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::size_t row = 0)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A Gram matrix needed by an estimator is (numerically) singular.
class SingularDesign : public Error {
 public:
  SingularDesign(double time, const std::string& what)
      : Error(what + " (at time " + std::to_string(time) + ")"), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Model with neither time-varying nor constant covariates.
class EmptyModel : public Error {
 public:
  EmptyModel() : Error("model has no included covariates") {}
};

/// Conditional covariate distribution cannot be formed.
class DegenerateConditional : public Error {
 public:
  using Error::Error;
};

/// Every candidate model failed to fit.
class EmptyRanking : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ahfic
