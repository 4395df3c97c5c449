#pragma once

#include <stdexcept>
#include <string>

namespace jetflow {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Two particles occupy the same position (the configuration spaces exclude
// the diagonal), either at construction or through a collision during
// integration.
struct CoincidentParticlesError : Error {
  using Error::Error;
};

// A kernel derivative beyond the supported order was requested.
struct DerivativeOrderError : Error {
  using Error::Error;
};

// Malformed input file; the message carries a line/field or byte-offset
// diagnostic.
struct ParseError : Error {
  using Error::Error;
};

// A parsed or constructed object violates a structural invariant.
struct InvariantViolationError : Error {
  using Error::Error;
};

// A trajectory left the representable range (non-finite values).
struct BlowUpError : Error {
  using Error::Error;
};

// A flow map was asked to transport data it does not carry.
struct MissingJacobianError : Error {
  using Error::Error;
};

// Synthetic image parameters outside the image domain.
struct InvalidParamsError : Error {
  using Error::Error;
};

}  // namespace jetflow
