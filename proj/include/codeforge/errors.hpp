#pragma once

#include <stdexcept>
#include <string>

namespace codeforge {

// Base of every error the library raises. Per-record rejections are values,
// not exceptions; these are reserved for contract violations and
// infrastructure failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Exact clique search was asked to handle more vertices than its budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line, std::size_t column)
        : Error(message + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class MaterializationError : public Error {
public:
    using Error::Error;
};

class MaskingError : public Error {
public:
    using Error::Error;
};

class RenderError : public Error {
public:
    using Error::Error;
};

// The sandbox could not run a unit at all (cannot write files, cannot spawn).
class InfrastructureError : public Error {
public:
    using Error::Error;
};

// Backward scoring could not produce a reward because execution
// infrastructure failed. Retryable; distinct from a zero reward.
class ScoringError : public Error {
public:
    using Error::Error;
};

}  // namespace codeforge
