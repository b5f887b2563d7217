#pragma once

#include <stdexcept>
#include <string>

namespace strongnoise {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (x <= 0, y >= z, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// A model or configuration violates its invariants.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Quadrature, root finding or time stepping failed to converge.
class NumericError : public Error {
public:
  using Error::Error;
};

/// The operation has no implementation for this model family.
class UnsupportedFamily : public Error {
public:
  using Error::Error;
};

/// Too few samples or events for a meaningful estimate.
class InsufficientData : public Error {
public:
  using Error::Error;
};

} // namespace strongnoise
