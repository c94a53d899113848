#pragma once

#include <stdexcept>
#include <string>

namespace dctm {

// Shape or broadcast incompatibility between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Per-modality sequences disagree on batch size or frame count.
class AlignmentError : public DimensionError {
public:
    using DimensionError::DimensionError;
};

// Caller violated an operation precondition (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// NaN/Inf in a loss or gradient.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files, label range violations, misaligned streams.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dctm
