#pragma once

#include <stdexcept>
#include <string>

namespace segsr {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extent or rank disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value, missing key, or precondition on a scalar
// argument (bad scale factor, query out of range, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written, or its content is malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, or a degenerate division.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace segsr
