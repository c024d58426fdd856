#pragma once

#include <stdexcept>

namespace persyn {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// The bytes were readable but do not form a supported file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Two operands have incompatible dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument is outside the mathematical domain of the operation
// (bad angle range, out-of-bounds coordinate, degenerate size, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace persyn
