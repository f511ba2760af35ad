#pragma once

#include <stdexcept>
#include <string>

namespace labelshift {

/// Base class for all library errors. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed input: invariant violations, parse failures, schema errors.
class InvalidInput : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_input"; }
};

/// The shift is not identifiable from the supplied predictor / confusion matrix.
class IdentifiabilityError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "identifiability"; }
};

/// Some target output has zero likelihood under every feasible weight vector.
class SupportError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "support"; }
};

class ConvergenceError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "convergence"; }
};

class IoError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

} // namespace labelshift
