#pragma once

#include <stdexcept>
#include <string>

namespace subln {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model, layer or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-range token id, label or sub-layer index.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Caller broke an API precondition (non-scalar loss, missing grads, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Normalizing a zero-variance vector without epsilon.
class DivisionHazard : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace subln
