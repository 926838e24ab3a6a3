#pragma once

#include <stdexcept>
#include <string>

namespace imseg {

/// Base of every error thrown by the library. `what()` is a single line.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Input outside an operation's mathematical domain (log of non-positive, NaN input).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Hyperparameter out of its valid range.
class ParameterError : public Error {
  public:
    using Error::Error;
};

/// Caller violated an operation's precondition.
class ContractError : public Error {
  public:
    using Error::Error;
};

/// Inconsistent model configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Invalid bounding-box prompt.
class PromptError : public Error {
  public:
    using Error::Error;
};

/// Non-finite or otherwise unusable data.
class DataError : public Error {
  public:
    using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Invalid command-line argument.
class ArgumentError : public Error {
  public:
    using Error::Error;
};

} // namespace imseg
