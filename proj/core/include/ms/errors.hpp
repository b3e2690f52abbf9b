#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ms {

// Base class for all toolkit errors so the CLI can catch one type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// Raised when no array access qualifies as the critical memory access,
// i.e. vectorizing would require gather instructions.
class GatherRequiredError : public Error {
public:
    GatherRequiredError(const std::string& what, std::string array)
        : Error(what), array_(std::move(array)) {}
    const std::string& array() const { return array_; }

private:
    std::string array_;
};

// Extent does not divide by the step implied by the configuration.
// Carries the largest valid extent at or below the requested one.
class DivisibilityError : public Error {
public:
    DivisibilityError(const std::string& what, std::int64_t suggested)
        : Error(what), suggested_(suggested) {}
    std::int64_t suggested_extent() const { return suggested_; }

private:
    std::int64_t suggested_;
};

// A byte offset fell outside the signed 32-bit immediate range.
class ImmediateOverflowError : public Error {
public:
    using Error::Error;
};

// A schedule needs more live vector registers than the architecture has.
class RegisterPressureError : public Error {
public:
    RegisterPressureError(const std::string& what, int live)
        : Error(what), live_(live) {}
    int live_registers() const { return live_; }

private:
    int live_;
};

class LayoutError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace ms
