#pragma once

#include <stdexcept>
#include <string>

namespace mmks {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was not met.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class OutOfDomain : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite was not (CG breakdown, Cholesky failure).
class IndefiniteError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to reach its tolerance where that is fatal.
class SolverError : public Error {
 public:
  using Error::Error;
};

class InvalidDensity : public Error {
 public:
  using Error::Error;
};

class ArityError : public Error {
 public:
  using Error::Error;
};

class MissingHints : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SingularEvaluation : public Error {
 public:
  using Error::Error;
};

#define MMKS_REQUIRE(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) throw ::mmks::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace mmks
