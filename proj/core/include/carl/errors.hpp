#pragma once

#include <stdexcept>
#include <string>

namespace carl {

/// Shape or length disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation produced (or would produce) a non-finite value, or divided by zero.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Misuse of the gradient tape: non-scalar loss, detached loss, missing gradient.
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class EmptyBufferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value that is not a shape problem (label range, weights, rates).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in the wrong lifecycle state (e.g. attaching features twice).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace carl
