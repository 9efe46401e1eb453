#pragma once

#include <stdexcept>
#include <string>

namespace beamcast {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes: validation-type errors exit 2, NumericalError exits 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class FrustumError : public GeometryError {
public:
    using GeometryError::GeometryError;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

// Non-finite gradient, loss or parameter encountered during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace beamcast
