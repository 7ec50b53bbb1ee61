#ifndef FEDSIM_ERRORS_HPP_
#define FEDSIM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fedsim {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/parameter shape disagreement. Message names both shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid operation parameter (e.g. non-positive temperature).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Malformed input data (labels out of range, bad file contents, ...).
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error(msg) {}
};

// Binary/textual file format violation; carries the byte offset.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, long long byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  long long offset;
};

// A partitioner ran out of source samples.
class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& msg) : Error(msg) {}
};

// Degenerate numeric input (e.g. near-zero vector for cosine similarity).
class DegenerateVectorError : public Error {
 public:
  explicit DegenerateVectorError(const std::string& msg) : Error(msg) {}
};

// Inconsistent configuration (missing teacher logits, unknown keys, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A documented internal invariant was violated by the caller.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& msg) : Error(msg) {}
};

}  // namespace fedsim

#endif  // FEDSIM_ERRORS_HPP_
