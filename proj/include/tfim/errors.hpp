#pragma once

#include <stdexcept>
#include <string>

namespace tfim {

// Precondition violations on public entry points.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Problem size exceeds a configured computational limit.
class ResourceLimitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sampler health problems (runaway expansion cutoff and friends).
class DiagnosticsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Root not bracketed after the permitted bracket expansions.
class BracketFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Data inconsistent beyond its own error bars (non-monotone E(T), crossings out of order).
class DataQualityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FitFailure : public std::runtime_error {
public:
    FitFailure(const std::string& what, std::string trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::string& trace() const noexcept { return trace_; }

private:
    std::string trace_;
};

// Malformed or invalid run configuration; the message names the line or field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tfim
