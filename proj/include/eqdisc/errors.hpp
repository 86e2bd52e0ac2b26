#pragma once

#include <stdexcept>
#include <string>

namespace eqdisc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct BackendError : Error {
    using Error::Error;
};

// Thrown when a scripted backend runs out of blocks or an HTTP backend
// fails after its retry budget.
struct BackendExhausted : BackendError {
    using BackendError::BackendError;
};

} // namespace eqdisc
