#pragma once

#include <stdexcept>
#include <string>

namespace rbo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or extents that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An operation produced (or was fed) a NaN/Inf, or a loss diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbo
