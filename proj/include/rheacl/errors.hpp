#pragma once

#include <stdexcept>
#include <string>

namespace rheacl {

/// Invalid configuration or shape/size mismatch detected at a module boundary.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller broke an operation precondition (e.g. stepping a finished episode).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Non-finite value in a forward pass, loss or gradient. Aborts the run.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rheacl
