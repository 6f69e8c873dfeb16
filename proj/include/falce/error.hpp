/**
 * @file error.hpp
 * @brief Exception hierarchy shared by all falce modules
 *
 * Each category maps onto one CLI exit status (see ExitStatus).
 */
#pragma once

#include <stdexcept>
#include <string>

namespace falce {

/// Stable process exit codes used by the command-line tool.
enum class ExitStatus : int {
    Success = 0,
    Usage = 1,
    InputOutput = 2,
    Numerical = 3,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitStatus status() const noexcept = 0;
};

/// Violated precondition on a caller-supplied argument.
class InvalidArgument : public Error {
public:
    using Error::Error;
    ExitStatus status() const noexcept override { return ExitStatus::Usage; }
};

/// Missing, unreadable, unwritable or malformed file.
class IoError : public Error {
public:
    using Error::Error;
    ExitStatus status() const noexcept override { return ExitStatus::InputOutput; }
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
    ExitStatus status() const noexcept override { return ExitStatus::InputOutput; }
};

/// The data admits no answer (constant image for Otsu, non-finite loss, ...).
class NumericalError : public Error {
public:
    using Error::Error;
    ExitStatus status() const noexcept override { return ExitStatus::Numerical; }
};

int exit_code(ExitStatus s) noexcept;

}  // namespace falce
