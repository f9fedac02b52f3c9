#pragma once

#include <stdexcept>
#include <string>

namespace rulehte {

/// Base class of every error raised by the library. The CLI maps the
/// concrete subclasses onto distinct process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument (out-of-range hyperparameter, bad arm
/// pair, unknown option value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Index or shape mismatch between objects that must agree.
class DimensionError : public DataError {
public:
    using DataError::DataError;
};

/// A well-formed request outside an operation's mathematical domain,
/// e.g. the HTE of the control arm or a comparison of an arm with itself.
class DomainError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Numerical failure: division by a zero propensity, non-finite values,
/// an undefined metric.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    unknown = 1,
    config = 2,
    data = 3,
    numerical = 4,
};

ExitCode exit_code_for(const std::exception& e) noexcept;

}  // namespace rulehte
