#pragma once

#include <stdexcept>
#include <string>

namespace cookielife {

// Malformed input structure (wrong header, missing column).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input whose content cannot be used.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Optimizer failed; the message carries the iteration trace.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cookielife
