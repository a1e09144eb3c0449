#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hb {

// Two families: ValidationError covers bad input or configuration (CLI exit
// code 1); RuntimeFailure covers numerical or I/O failures during a run
// (CLI exit code 2).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotPositiveDefinite : public RuntimeFailure {
 public:
  explicit NotPositiveDefinite(std::size_t pivot, const std::string& hint = "")
      : RuntimeFailure("matrix is not positive definite (failing pivot " +
                       std::to_string(pivot) + ")" + (hint.empty() ? "" : "; " + hint)),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class SimulationDiverged : public RuntimeFailure {
 public:
  explicit SimulationDiverged(double time)
      : RuntimeFailure("simulation diverged: non-finite state at t=" +
                       std::to_string(time) + " s"),
        time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

class NotConverged : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace hb
