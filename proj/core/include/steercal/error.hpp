#pragma once

#include <stdexcept>
#include <string>

namespace steercal {

// Process exit codes used by the CLI. Library code signals failures with the
// exception types below; the CLI maps them onto these codes.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    calibration_failure = 4,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string & what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept { return ExitCode::data_error; }
};

// Shape or argument violations of a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::config_error; }
};

class DataError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::calibration_failure; }
};

} // namespace steercal
