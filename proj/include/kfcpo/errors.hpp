#ifndef KFCPO_ERRORS_HPP_
#define KFCPO_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace kfcpo {

// Shapes, dimensions or config values that cannot work together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or a failed decomposition.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. stepping a finished episode.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Curvature eigendecomposition missing or too old for use.
class StaleStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs carry no usable signal (all-zero gradients, empty batch).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kfcpo

#endif  // KFCPO_ERRORS_HPP_
