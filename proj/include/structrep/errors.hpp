#pragma once

#include <stdexcept>
#include <string>

namespace structrep {

// Incompatible dimensions between operands, tensors, canvases or files.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input for which the operation is mathematically undefined (zero vector, ...).
struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Raised when a retrieval metric has an empty denominator.
struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct BuildError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File system or on-disk format problem; message always carries the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during optimisation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace structrep
