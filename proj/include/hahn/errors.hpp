#pragma once

#include <stdexcept>
#include <string>

namespace hahn {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated precondition or mathematical domain restriction.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// Result not representable (overflow of q^-k and the like).
class RangeError : public Error {
public:
    explicit RangeError(const std::string& msg) : Error(msg) {}
};

/// A truncated series or iteration hit its cap with the stopping test still failing.
class NonconvergenceError : public Error {
public:
    explicit NonconvergenceError(const std::string& msg) : Error(msg) {}
};

/// Expression evaluation failure: unbound name or a numeric domain violation.
class EvalError : public Error {
public:
    EvalError(const std::string& msg, std::string offending_node)
        : Error(msg + " [at: " + offending_node + "]"), node(std::move(offending_node)) {}
    std::string node;
};

/// Syntax error with the byte offset of the offending token.
class ParseError : public Error {
public:
    ParseError(std::size_t pos, const std::string& msg, std::string expected_tokens)
        : Error(msg + " (at offset " + std::to_string(pos) + ")"),
          position(pos), message(msg), expected(std::move(expected_tokens)) {}
    std::size_t position;
    std::string message;
    std::string expected;
};

/// API misuse, e.g. asking for a natural boundary condition at a fixed end.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

} // namespace hahn
