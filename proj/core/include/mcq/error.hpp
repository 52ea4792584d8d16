#pragma once

#include <stdexcept>
#include <string>

namespace mcq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed container, manifest or dataset; non-finite values on load.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Tensor or layer shapes that do not line up.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Quantization-domain failure: all-zero distributions, empty counts.
class DegenerateError : public Error {
public:
  using Error::Error;
};

/// Integer accumulator would exceed its headroom budget.
class OverflowError : public Error {
public:
  using Error::Error;
};

} // namespace mcq
