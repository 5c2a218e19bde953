#pragma once

#include <stdexcept>
#include <string>

namespace skar {

// Incompatible tensor shapes or joint counts.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by an operation, or misuse of the recorded graph.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files, inconsistent datasets and checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skar
