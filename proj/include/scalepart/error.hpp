#pragma once

#include <stdexcept>
#include <string>

namespace scalepart {

// Input violates an operation's precondition (non-finite coordinates, bad sizes, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// On-disk or on-wire payload is malformed (bad magic, unknown version, truncation).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimization produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scalepart
