#pragma once

#include <stdexcept>
#include <string>

namespace drsn {

// Shape disagreement between operands, or an operand shape the op cannot take.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid model/training/experiment configuration. CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or missing input data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Non-finite loss or gradient during optimization. CLI exit code 4.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int last_good_epoch = -1)
      : std::runtime_error(what), last_good_epoch_(last_good_epoch) {}
  int last_good_epoch() const noexcept { return last_good_epoch_; }

 private:
  int last_good_epoch_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint loading failures; the subclasses are distinguishable by type.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace drsn
