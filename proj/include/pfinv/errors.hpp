#pragma once

#include <stdexcept>
#include <string>

namespace pfinv {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed file, invalid configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A linear or nonlinear solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or out-of-domain geometry.
class GeometryError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfinv
