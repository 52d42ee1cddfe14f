#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace polyobs {

// Runtime failures (numerics, I/O, diverged simulations) exit with code 1,
// configuration and usage problems with code 2.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
  int exit_code() const override { return 2; }
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class SimulationDiverged : public NumericError {
public:
  SimulationDiverged(const std::string& msg, std::size_t step)
      : NumericError(msg), step_(step) {}
  std::size_t step() const { return step_; }

private:
  std::size_t step_;
};

class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// Requested enumeration exceeds the configured monomial cap.
class CapacityError : public ConfigError {
public:
  CapacityError(const std::string& msg, unsigned long long count)
      : ConfigError(msg), count_(count) {}
  unsigned long long count() const { return count_; }

private:
  unsigned long long count_;
};

// Dataset file and expected metadata disagree.
class SchemaError : public ConfigError {
public:
  explicit SchemaError(const std::string& msg) : ConfigError(msg) {}
};

}  // namespace polyobs
