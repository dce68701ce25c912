#pragma once

#include <stdexcept>
#include <string>

namespace synthrad {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or usage (bad flag values, schedule bounds, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Invalid input data (CSV rows, unknown tokens, bad checkpoints, ...).
struct DataError : Error {
    using Error::Error;
};

// Numeric failure (NaN losses, non-finite parameters).
struct NumericError : Error {
    using Error::Error;
};

// Operator called with non-conforming tensor shapes.
struct ShapeError : DataError {
    using DataError::DataError;
};

// Operator input outside its numeric domain (e.g. bce outside (0,1)).
struct DomainError : NumericError {
    using NumericError::NumericError;
};

}  // namespace synthrad
