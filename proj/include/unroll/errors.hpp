#pragma once

#include <stdexcept>
#include <string>

namespace unroll {

// Bad user configuration (unknown keys, malformed values). CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Divergence, non-finite values, failed gradient checks. CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File format violations and I/O failures. CLI exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace unroll
