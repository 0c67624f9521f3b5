#pragma once

#include <stdexcept>
#include <string>

namespace tlbench {

/// Root of every error raised by the library. Each subclass corresponds to one
/// failure category so callers (mostly the CLI) can map it to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed by a numeric kernel.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (model, training, split, truncation ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Data that cannot be processed (all-missing series, zero variance ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// Violated function precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Experiment plan that breaks a strategy invariant.
class PlanError : public Error {
public:
    using Error::Error;
};

/// Training diverged or otherwise failed.
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace tlbench
