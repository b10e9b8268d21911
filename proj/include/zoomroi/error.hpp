#pragma once

#include <stdexcept>
#include <string>

namespace zoomroi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad caller input: out-of-range addresses, invalid parameters, illegal actions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Unreadable or malformed files.
class IoError : public Error {
public:
    using Error::Error;
};

/// A malformed line in a text file; carries the 1-based line number.
class ParseError : public IoError {
public:
    ParseError(std::size_t line, const std::string& what)
        : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace zoomroi
