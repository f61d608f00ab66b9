#pragma once

#include <stdexcept>

namespace mlmpc {

// Invalid parameters, ill-formed configuration files, cross-field mismatches.
// The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite states, impossible dynamics, snapshot mismatches. Exit code 2.
struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer failure (e.g. every candidate evaluated to a non-finite cost).
struct OptimizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mlmpc
