#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace almrr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad argument values (ranges, enum names, config keys).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout or unsupervised-contract violation.
class DataContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// AUROC / AP requested on a set without both classes.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Malformed checkpoint; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace almrr
