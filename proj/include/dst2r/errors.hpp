#pragma once

#include <stdexcept>

namespace dst2r {

// Shape or index mismatch between operands.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated files, unreadable paths.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or a computation that cannot proceed numerically.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dst2r
