#pragma once

#include <stdexcept>
#include <string>

namespace rfio {

// Argument outside the domain of a map (e.g. |m| >= 1 for the entropy).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Parameters for which the requested object does not exist.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative solver ran out of steps.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration: geometry that does not tile, unknown keys, ...
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A property the dynamics is supposed to preserve was violated.
struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rfio
