#pragma once

#include <stdexcept>
#include <string>

namespace boundcf {

// Bad input: malformed files, inconsistent dimensions, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The computation itself failed (diverging loss, empty boundary set, ...).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace boundcf
