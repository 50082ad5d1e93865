#pragma once

#include <stdexcept>
#include <string>

namespace psi {

// Malformed file contents (.psit container, JSON-lines records).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or argument value. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Input data violates a precondition of an operation. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace psi
