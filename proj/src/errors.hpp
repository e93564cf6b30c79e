#pragma once

#include <stdexcept>
#include <string>

namespace levyub {

// Error taxonomy. Everything thrown by the core derives from Error so the
// C facade can translate to status codes without enumerating std exceptions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration value, inconsistent options, unusable inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File / parse problems (missing file, malformed CSV or JSON).
class IoError : public Error {
 public:
  using Error::Error;
};

// A numeric contract was violated at run time (non-finite ratio, invalid
// weight, bound violation).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Euler recursion produced a non-finite state; message carries level and step.
class NonFiniteStateError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Every particle weight collapsed to zero mass.
class DegenerateWeightsError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Mismatched array lengths, particle counts, or level pairs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// The jump-threshold equation has no root in the admissible interval.
class NoSolutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace levyub
