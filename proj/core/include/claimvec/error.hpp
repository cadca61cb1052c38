#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace claimvec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number and the offending field.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, std::string field, const std::string& detail)
        : Error(source + ":" + std::to_string(line) + ": field '" + field + "': " + detail),
          source_(std::move(source)), line_(line), field_(std::move(field)) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string source_;
    std::size_t line_;
    std::string field_;
};

/// Bad configuration value (hyperparameter out of range, missing concept, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Persisted artifact is truncated, corrupted, or from an incompatible version.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace claimvec
