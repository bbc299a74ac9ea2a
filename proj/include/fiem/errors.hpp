#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fiem {

// Invalid argument values (empty batch, negative weights, bad rho, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent setup: dimension mismatches, missing diagnostics, bad config.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A statistic outside the domain of the M-step, or a parameter outside Theta.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operation requires a capability (objective, curvature, constants) the model lacks.
class UnsupportedCapability : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Planner equation without a feasible solution; names the violated inequality.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(std::string condition)
      : std::runtime_error("infeasible: " + condition), condition_(std::move(condition)) {}
  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

// Object used before it was initialized (e.g. an empty memory table).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LinearAlgebraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run stopped at `iteration` because the model rejected the current state.
class RunAborted : public std::runtime_error {
 public:
  RunAborted(std::size_t iteration, const std::string& reason)
      : std::runtime_error("run aborted at iteration " + std::to_string(iteration) + ": " + reason),
        iteration_(iteration),
        reason_(reason) {}
  std::size_t iteration() const noexcept { return iteration_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t iteration_;
  std::string reason_;
};

}  // namespace fiem
