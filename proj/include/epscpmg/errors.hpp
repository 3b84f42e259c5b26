#pragma once

#include <stdexcept>
#include <string>

namespace epscpmg {

// Configuration / input-schema problems. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset schema or coverage problems. CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested state space exceeds the supported capacity. CLI exit code 2.
struct CapacityError : ConfigError {
  using ConfigError::ConfigError;
};

// Numerical failure (non-finite amplitudes, degenerate geometry, ...).
// CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rejection sampling could not satisfy the exclusion constraints.
struct SamplingError : NumericalError {
  using NumericalError::NumericalError;
};

// Caller violated an API precondition (horizon shortfall, bad schedule, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Fit did not converge or the data are degenerate. CLI exit code 4.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace epscpmg
