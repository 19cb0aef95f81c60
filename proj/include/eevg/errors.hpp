#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eevg {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid hyperparameter or structural configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called outside its documented precondition.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind { bad_magic, bad_version, truncated, count_mismatch, schema_mismatch, parse };

// Malformed binary or text file. Carries the byte offset (or line number for
// text formats) at which the problem was detected.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), kind_(kind), offset_(offset) {}

  FormatErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  FormatErrorKind kind_;
  std::size_t offset_;
};

}  // namespace eevg
