#pragma once

#include <stdexcept>
#include <string>

namespace rewrite_lab {

enum class ErrorKind {
  kEmptyUtterance,
  kParse,
  kSchema,
  kUnalignable,
  kCorruptMatrix,
  kEmptyContext,
  kVocab,
  kShape,
  kDegenerateVector,
  kMissingGold,
  kVersion,
  kConfig,
  kIo,
  kNumeric,
};

const char* ErrorKindName(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Errors raised while reading a corpus carry the 1-based line number.
class LineError : public Error {
 public:
  LineError(ErrorKind kind, int line, const std::string& message)
      : Error(kind, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace rewrite_lab
