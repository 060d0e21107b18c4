#pragma once

#include <stdexcept>
#include <string>

namespace probsa {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input outside an operation's mathematical domain (log of a non-positive value, empty softmax, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf appeared where finite values were required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent dataset, bag or checkpoint file.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace probsa
