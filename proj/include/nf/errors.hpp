#pragma once

#include <stdexcept>
#include <string>

namespace nf {

/// Invalid user configuration (bad JSON key, out-of-range value, mode mismatch).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array shapes that do not line up.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced somewhere it must not be.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API called out of order (e.g. gradient requested from a non-scalar).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// File missing, truncated or inconsistent with its manifest.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nf
