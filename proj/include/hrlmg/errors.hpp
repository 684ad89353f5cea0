#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hrlmg {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vector handed to a direction-only operation (cosine, action mapping).
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached a place that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class SessionExhaustedError : public Error {
 public:
  using Error::Error;
};

class SessionTerminatedError : public Error {
 public:
  using Error::Error;
};

class EmptyBufferError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hrlmg
