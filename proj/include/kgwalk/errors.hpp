#pragma once

#include <stdexcept>
#include <string>

namespace kgwalk {

// Bad command line or config usage. CLI exit code 1.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or failed numeric invariants. CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kgwalk
