#pragma once

#include <stdexcept>
#include <string>

namespace graphrefine {

// Malformed or inconsistent data (files, graphs, shapes).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied setting is out of range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A directed pair (k, l) is not in the input neighbourhood support.
class SupportError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Enumeration would exceed the oracle's configuration budget.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// r_i + r_j == 0 in the radius-normalized relative position.
class DegenerateRadiusError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite gradient reached the optimizer.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t parameter_index)
      : std::runtime_error(what), parameter_index_(parameter_index) {}

  std::size_t parameter_index() const noexcept { return parameter_index_; }

 private:
  std::size_t parameter_index_;
};

}  // namespace graphrefine
