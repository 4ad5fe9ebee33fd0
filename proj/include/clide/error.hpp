#pragma once

#include <stdexcept>
#include <string>

namespace clide {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

/// Malformed file contents (bad magic, truncation, ragged CSV, ...).
class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "FormatError"; }
};

/// Input violates a documented precondition or invariant.
class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ValidationError"; }
};

/// Input is well-formed but carries too little information (too few rows,
/// zero variance, zero-norm vectors).
class DegenerateInputError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "DegenerateInputError"; }
};

/// An iterative routine failed to converge or produced an unusable result.
class NumericalError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "NumericalError"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "IoError"; }
};

} // namespace clide
