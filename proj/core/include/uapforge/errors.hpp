#pragma once

#include <stdexcept>
#include <string>

namespace uapforge {

/// Violated precondition on shapes or arguments (maps to CLI exit code 2).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf or an otherwise unusable numeric state (exit code 4).
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A feature map collapsed to zero, so -log(norm) is undefined.
class DegenerateActivation : public NumericFailure {
public:
    using NumericFailure::NumericFailure;
};

/// Invalid run configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing, truncated or malformed dataset / artifact files (exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace uapforge
