#pragma once

#include <stdexcept>
#include <string>

namespace reptrain {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument values (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported checkpoint file.
class CorruptCheckpointError : public Error {
 public:
  using Error::Error;
};

// Dataset ingestion problems (bad manifest rows, unreadable images).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced during a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A training iteration could not proceed; carries the iteration index.
class TrainingError : public Error {
 public:
  TrainingError(int iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace reptrain
