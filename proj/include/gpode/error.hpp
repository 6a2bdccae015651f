#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpode {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible shapes or state dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Factorization failure, non-finite values, and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Violated precondition (non-increasing times, wrong counts, non-scalar loss...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or unknown configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::vector<std::string> keys = {})
      : Error(what), keys_(std::move(keys)) {}
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::vector<std::string> keys_;
};

// Missing or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// The ODE solver exceeded its step budget. Carries the last state reached.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, double time, std::vector<double> state)
      : NumericalError(what), time_(time), state_(std::move(state)) {}
  double time() const noexcept { return time_; }
  const std::vector<double>& state() const noexcept { return state_; }

 private:
  double time_;
  std::vector<double> state_;
};

// One or more members of a batched solve failed.
class BatchError : public NumericalError {
 public:
  BatchError(const std::string& what, std::vector<std::size_t> failed, bool diverged)
      : NumericalError(what), failed_(std::move(failed)), diverged_(diverged) {}
  const std::vector<std::size_t>& failed() const noexcept { return failed_; }
  // True when at least one failure was a step-budget divergence.
  bool diverged() const noexcept { return diverged_; }

 private:
  std::vector<std::size_t> failed_;
  bool diverged_;
};

}  // namespace gpode
