#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rntraj {

// Base for every error the library raises on bad input or broken contracts.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree.
struct DimensionError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

// Caller violated a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

// Malformed input file.
struct FormatError : Error {
  using Error::Error;
};

// Coordinate outside the grid extent.
struct RangeError : Error {
  using Error::Error;
};

// Bad configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Training diverged or produced non-finite values.
struct NumericError : Error {
  using Error::Error;
};

// A GPS point had no road segment nearby.
struct UnmatchedPointError : Error {
  UnmatchedPointError(std::size_t index, const std::string& what)
      : Error(what), point_index(index) {}
  std::size_t point_index;
};

}  // namespace rntraj
