#pragma once

#include <stdexcept>
#include <string>

namespace ppd {

/// Header bits 1-3 did not read 0,1,0.
class SyncError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The sampled channel stayed low for a whole synchronization search cycle.
class NoSignal : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Simulation configuration outside its valid range (dt, duration, topology).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed scenario document. Carries the offending line (1-based, 0 if
/// unknown) and a field path.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line, std::string field)
        : std::runtime_error(what), line_(line), field_(std::move(field)) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

/// Well-formed scenario that violates a domain invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownPreset : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ppd
