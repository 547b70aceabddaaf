// Exception types shared by all metra modules.

#ifndef METRA_ERROR_H
#define METRA_ERROR_H

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metra {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index or level outside its declared range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Mismatched lengths or dimensions between inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Problem instance exceeds a fixed table or enumeration budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// No state path with finite score exists.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Loss or score became NaN/inf where a finite value is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage or missing required inputs.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed document. `field` names the offending JSON field when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& field, const std::string& what)
      : Error(field.empty() ? what : "field '" + field + "': " + what),
        field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace metra

#endif  // METRA_ERROR_H
