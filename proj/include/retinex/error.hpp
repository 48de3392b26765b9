#pragma once

#include <stdexcept>
#include <string>

namespace retinex {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (plane sizes, channel counts).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value violates a documented invariant or range (NaN pixel, gamma <= 0, ...).
class InvariantError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// File is readable but in a format (or variant) we do not accept.
class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

/// File claims a supported format but its header or payload is malformed.
class CorruptFileError : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double achieved_residual, int iterations)
        : Error(what), residual_(achieved_residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

}  // namespace retinex
