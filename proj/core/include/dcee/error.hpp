#pragma once

#include <stdexcept>
#include <string>

namespace dcee {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, inconsistent configs, violated preconditions.
/// The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular or ill-conditioned systems, empty arms.
/// The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcee
