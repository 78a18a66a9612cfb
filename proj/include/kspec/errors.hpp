#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kspec {

// Bad input: malformed files, inconsistent shapes, invalid configuration.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A parse failure tied to a location in a text file.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : ValidationError(source + ":" + std::to_string(line) + ": " + what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// A linear-algebra failure (singular ridgeless system, empty spectrum, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File missing, unreadable or unwritable.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kspec
