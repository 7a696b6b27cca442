#pragma once

#include <stdexcept>
#include <string>

namespace interplan {

// Invalid user-supplied configuration: profiles, options, scenario files.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mismatched dimensions between arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Arguments outside the mathematical domain of a function (e.g. rows that are
// not probability distributions).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite values appearing during a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A request exceeding a hard size cap (e.g. exact enumeration).
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace interplan
