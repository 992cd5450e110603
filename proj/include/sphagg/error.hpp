#pragma once

#include <stdexcept>
#include <string>

namespace sphagg {

// Exception hierarchy shared by all modules. Numerical failures derive from
// NumericalError so the CLI can map them onto a single exit code.

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParameterRangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by log/transport when the two points are (numerically) antipodal.
class CutLocusError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotPositiveSemidefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EntropyUndefined : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonFiniteValue : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace sphagg
