#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace contingency {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent scenario/config input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An object could not be built (non-Hurwitz Lyapunov system, center inside an obstacle, ...).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

// Query outside the domain of a value table or grid.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Target switch rejected because its certificate does not hold at the current state.
class SwitchError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace contingency
