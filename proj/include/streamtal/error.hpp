#pragma once

#include <stdexcept>
#include <string>

namespace streamtal {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad magic, unknown version, malformed CSV header.
class FormatError : public Error {
public:
    using Error::Error;
};

// Missing files, truncated payloads, failed writes.
class IoError : public Error {
public:
    using Error::Error;
};

// Precondition violated by an argument.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or parameter during training.
class NumericError : public Error {
public:
    using Error::Error;
};

// Experiment or generator configuration that cannot be satisfied.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace streamtal
