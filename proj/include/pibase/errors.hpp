#pragma once

#include <stdexcept>
#include <string>

namespace pibase {

// Base of every error raised by the library. Subclasses map onto the
// error classes named by each operation contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

// Broker-facing classes; the HTTP layer maps them onto status codes.
class AuthError : public Error {
public:
    using Error::Error;
};

class ForbiddenError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

class PayloadTooLarge : public SizeError {
public:
    using SizeError::SizeError;
};

class ReservedKeyError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// Broker could not be reached (connection refused, timeout, 5xx).
class UnavailableError : public Error {
public:
    using Error::Error;
};

}  // namespace pibase
