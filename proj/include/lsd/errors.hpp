#pragma once

#include <stdexcept>
#include <string>

namespace lsd {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// p_t(x) == 0: the state is unreachable under the forward process.
class SingularStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transition row has no mass left after clipping.
class DegenerateStepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A learnable parameter left its admissible range during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int step_index)
      : std::runtime_error(what), step_index_(step_index) {}

  int step_index() const noexcept { return step_index_; }

 private:
  int step_index_;
};

}  // namespace lsd
