#pragma once

#include <stdexcept>
#include <string>

namespace agetrait {

// A rate function returned a non-finite value, or a declared bound is unusable.
class InvalidModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Conditioned mutation sampling exhausted its attempt cap.
class DegenerateKernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A thinning acceptance ratio fell outside [0, 1]: a user-declared bound is false.
class BoundViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The age normalizer did not converge before the search limit.
class HeavyTailError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model name is neither registered nor a readable JSON file.
class UnknownModelError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An output file or directory could not be written.
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace agetrait
