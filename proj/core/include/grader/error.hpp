#pragma once

#include <stdexcept>
#include <string>

namespace grader {

// Base for every error raised by the library. Subclasses name the failure
// class so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidGoalError : public Error {
 public:
  using Error::Error;
};

class EmptyBufferError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ModelInputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, int factor_index)
      : Error(what), factor_index_(factor_index) {}
  int factor_index() const { return factor_index_; }

 private:
  int factor_index_;
};

class OptimizationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the file name and 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, long line, const std::string& what);
  const std::string& file() const { return file_; }
  long line() const { return line_; }

 private:
  std::string file_;
  long line_;
};

}  // namespace grader
