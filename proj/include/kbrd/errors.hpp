#pragma once

#include <stdexcept>

namespace kbrd {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Raised when a softmax slice has no finite entry.
struct DegenerateMaskError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// A named entity, session or similar key does not exist.
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// A metric was asked for over an empty population.
struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace kbrd
