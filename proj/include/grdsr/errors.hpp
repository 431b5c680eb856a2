#pragma once

#include <stdexcept>
#include <string>

namespace grdsr {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError/DomainError -> 2, DataError/FormatError -> 3, NumericalError -> 4.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. scale <= 1).
struct DomainError : ConfigError {
    using ConfigError::ConfigError;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : DataError {
    using DataError::DataError;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace grdsr
