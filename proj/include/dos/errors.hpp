#pragma once

#include <stdexcept>
#include <string>

namespace dos {

// Error hierarchy used across the library.  Everything derives from
// std::runtime_error so callers can catch broadly or per-category.

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent dataset contents.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (out-of-range hyperparameters etc).
struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// A request exceeds what the data can provide (e.g. more neighbors
// than there are same-class samples).
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or unrecognized on-disk formats.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration files / CLI flag combinations.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dos
