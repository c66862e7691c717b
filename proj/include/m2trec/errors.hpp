#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace m2trec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: config, schema, or CLI arguments. Maps to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A data file that could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

class DuplicateItemError : public Error {
 public:
  explicit DuplicateItemError(std::string item_id)
      : Error("duplicate item_id '" + item_id + "'"), item_id_(std::move(item_id)) {}
  const std::string& item_id() const noexcept { return item_id_; }

 private:
  std::string item_id_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpointError : public CheckpointError {
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

// Raised when training produces a NaN/inf loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace m2trec
