#pragma once

#include <stdexcept>
#include <string>

namespace projgp {

// Error taxonomy. NumericalError maps to CLI exit code 1, ConfigError to
// exit code 2 (usage / configuration / malformed input).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : NumericalError {
  int pivot_index;  // first pivot that failed (0-based), -1 if unknown
  explicit NotPositiveDefinite(const std::string& what, int pivot = -1)
      : NumericalError(what), pivot_index(pivot) {}
};

struct NumericalBreakdown : NumericalError {
  using NumericalError::NumericalError;
};

struct OptimizerDiverged : NumericalError {
  using NumericalError::NumericalError;
};

struct NonFiniteGradient : NumericalError {
  using NumericalError::NumericalError;
};

struct OutOfBounds : NumericalError {
  using NumericalError::NumericalError;
};

struct DimensionMismatch : ConfigError {
  using ConfigError::ConfigError;
};

struct NonFiniteInput : ConfigError {
  using ConfigError::ConfigError;
};

struct InvalidDegrees : ConfigError {
  using ConfigError::ConfigError;
};

struct DegenerateDirection : ConfigError {
  using ConfigError::ConfigError;
};

struct EmptyProjectionSet : ConfigError {
  using ConfigError::ConfigError;
};

struct UnsupportedDegree : ConfigError {
  using ConfigError::ConfigError;
};

struct UnsupportedFamily : ConfigError {
  using ConfigError::ConfigError;
};

struct ParseError : ConfigError {
  int row = -1, column = -1;
  ParseError(const std::string& what, int r, int c)
      : ConfigError(what), row(r), column(c) {}
};

struct MissingTarget : ConfigError {
  using ConfigError::ConfigError;
};

struct NonFiniteValue : ConfigError {
  int row = -1, column = -1;
  NonFiniteValue(const std::string& what, int r = -1, int c = -1)
      : ConfigError(what), row(r), column(c) {}
};

struct InvalidDelta : ConfigError {
  using ConfigError::ConfigError;
};

struct TooFewPoints : ConfigError {
  using ConfigError::ConfigError;
};

}  // namespace projgp
