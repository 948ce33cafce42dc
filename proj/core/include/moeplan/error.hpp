#pragma once

#include <stdexcept>
#include <string>

namespace moeplan {

// Base of every error thrown by the library. Precondition violations on
// plain arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invalid configuration / profile / trace input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline constraint that makes the requested computation meaningless,
// e.g. communication that can never be hidden behind computation.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

// Least-squares fit that cannot be computed from the supplied points.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace moeplan
