#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wdro {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Incompatible shapes between a network and its inputs.
class DimensionError : public Error {
 public:
  DimensionError(std::size_t layer, const std::string& what)
      : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// Non-finite value produced during evaluation or training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input; carries the offending byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t offset, const std::string& what)
      : Error(path + " @" + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine detected that its own assumptions were violated.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace wdro
