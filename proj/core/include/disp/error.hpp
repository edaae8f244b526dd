#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace disp {

// Base of every error raised by the library. The CLI maps the three
// families below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, datasets, corpora, arguments
// that violate an operation's precondition).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Parse failure tied to a line of a text file.
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Binary file failed validation at a byte offset.
class CorruptFileError : public DataError {
 public:
  CorruptFileError(const std::string& source, std::uint64_t offset, const std::string& what)
      : DataError(source + " @" + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class VersionMismatchError : public CorruptFileError {
 public:
  using CorruptFileError::CorruptFileError;
};

}  // namespace disp
