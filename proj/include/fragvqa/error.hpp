#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fragvqa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, truncated or inconsistent input files and sidecars.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are well formed but use a variant we do not handle
/// (colorspace, sample width, channel count).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Sampling geometry that cannot be realized on the given video.
class GeometryError : public Error {
 public:
  GeometryError(std::string axis, const std::string& what)
      : Error(what), axis_(std::move(axis)) {}

  /// "t", "h" or "w".
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

/// Shape or argument mismatch between cooperating objects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input, e.g. a constant vector handed to a
/// correlation.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A pooling schedule that breaks the match constraint.
class ConstraintError : public Error {
 public:
  using Error::Error;
};

}  // namespace fragvqa
