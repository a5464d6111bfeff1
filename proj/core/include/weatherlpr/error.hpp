#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wlpr {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Unreadable, missing or malformed input data (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed binary scan; carries the byte offset where parsing failed.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Tensor shape contract violation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or undefined metrics (exit code 4).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace wlpr
