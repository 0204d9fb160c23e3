#pragma once

#include <stdexcept>
#include <string>

namespace dcg {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A NaN or infinity where a finite number is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TopologyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Some agent has no available action.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumeration would exceed the configured cap.
struct SizeError : std::length_error {
  using std::length_error::length_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dcg
