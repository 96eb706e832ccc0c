#pragma once

#include <stdexcept>
#include <string>

namespace seed {

// Caller broke an operation's precondition (shape mismatch, non-binary target...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Architecture / dataset / operator configuration cannot be realized.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API used out of order (backward on a detached tensor, step without grads...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// On-disk data is malformed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seed
