#pragma once

#include <stdexcept>
#include <string>

namespace shapereg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree with the problem dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, constraint description or input data.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A solver produced a non-finite iterate, a factorization failed, or a line
/// search could not make progress.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (CSV, model documents, config files).
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail
}  // namespace shapereg
