#pragma once

#include <stdexcept>
#include <string>

namespace neo {

// Invalid hyperparameters, layouts, or call arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes that do not conform. Messages name the offending dimensions.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// NaN/Inf produced during evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files (checkpoints, corpora, config text).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace neo
