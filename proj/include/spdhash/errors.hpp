#pragma once

#include <stdexcept>
#include <string>

namespace spdhash {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative decomposition ran out of its sweep budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

class NonSpdError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Repeated or vanishing singular values make the structured backward pass undefined.
class DegenerateSpectrumError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf showed up in a tensor that must stay finite.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class CorruptHeaderError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace spdhash
