#pragma once

#include <stdexcept>
#include <string>

namespace tl {

// Shape or argument mismatch in a numeric primitive.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or incompatible file (dataset, checkpoint, CSV, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A trained model did not reach the clean-accuracy gate.
class GateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few images survived curation.
class CurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite gradient or other unrecoverable failure inside an attack.
class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value reaching an optimizer update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tl
