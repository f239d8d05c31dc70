#pragma once

#include <stdexcept>
#include <string>

namespace kwflow {

// Base for everything thrown by this library. The CLI maps subclasses to
// exit codes, so new error kinds should extend one of the classes below
// rather than std::runtime_error directly.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed complex: open edges, inconsistent orientation, pinched vertices,
// bad indices, duplicate divisor entries.
struct StructureError : Error {
  using Error::Error;
};

// Metric data that cannot come from a valid triangle mesh: non-positive or
// triangle-inequality-violating edge lengths, cone orders <= -1.
struct GeometryError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Linear solver out of budget, overflow, degenerate denominators.
struct NumericalError : Error {
  using Error::Error;
};

// e^{2u} (or similar) left the representable range.
struct RangeError : NumericalError {
  using NumericalError::NumericalError;
};

// A denominator that the theory promises nonzero collapsed numerically.
struct DegeneracyError : NumericalError {
  using NumericalError::NumericalError;
};

// Time stepper cannot satisfy its local tolerances even at dt_min.
struct StiffnessError : NumericalError {
  using NumericalError::NumericalError;
};

// Constraint renormalization outside its Newton basin or drifting too far.
struct ProjectionError : NumericalError {
  using NumericalError::NumericalError;
};

struct UniformizeError : NumericalError {
  using NumericalError::NumericalError;
};

struct SeedError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace kwflow
