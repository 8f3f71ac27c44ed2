#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phaseseg {

/// Operand shapes do not agree (channel counts, frame counts, stage sizes).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value violates a documented precondition (out-of-range label, bad config).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Text input could not be parsed. `position` is a 0-based character offset
/// inside the offending string, or a 1-based line number for file readers.
class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::invalid_argument(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Two annotations claim different phases for the same instant.
class ConflictError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Binary file is not a model file or is truncated.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model file carries a version this build does not read.
class VersionError : public FormatError {
 public:
  VersionError(const std::string& what, unsigned found)
      : FormatError(what), found_(found) {}
  unsigned found() const noexcept { return found_; }

 private:
  unsigned found_;
};

/// NaN or infinity where a finite number is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace phaseseg
