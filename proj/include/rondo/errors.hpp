#pragma once

#include <stdexcept>
#include <cstddef>
#include <string>

namespace rondo {

// Argument outside the mathematical domain of an operation (t outside [0,1],
// arclength past the end of a path, l > l_max, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An API was used in a state where it is not allowed (stepping a finished
// episode, pushing an empty accumulator, mismatched tensor shapes).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input document. Carries the 1-based line when known (0 otherwise)
// and the dotted field path that failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0, std::string field = {})
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

// A structurally valid document whose contents break a type invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A gradient came out NaN or infinite; `step` is the offending trajectory step.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rondo
