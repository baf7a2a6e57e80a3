#pragma once

#include <stdexcept>
#include <string>

namespace gs4d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain argument.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Array sizes or SH degrees that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Singular or ill-conditioned matrix encountered.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed text input (JSON, PLY header, config file).
class ParseError : public Error {
public:
    using Error::Error;
};

/// File is not of the expected binary format (e.g. not a PNG).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Truncated or corrupted checkpoint.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class UnsupportedVersion : public Error {
public:
    using Error::Error;
};

} // namespace gs4d
