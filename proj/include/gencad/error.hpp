#pragma once

#include <stdexcept>
#include <string>

namespace gencad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or binary input (JSON, PGM, sidecar formats, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A value outside its declared domain (quantization levels, timesteps, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Structural failure while turning a program into geometry.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape or configuration mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Truncated, corrupted, or incompatible checkpoint / index files.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numeric input (zero vector, too few samples).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was run before the stage it depends on.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace gencad
