#pragma once

#include <stdexcept>

namespace vpflow {

// Operand shapes violate an operation's contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Values outside an operation's domain (log of non-positives, NaN inputs).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// API contract broken by the caller (double backward, non-deterministic
// closure handed to grad_check, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad configuration file or command line.  CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable dataset.  CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite objective or gradient during training.  CLI exit code 4.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vpflow
