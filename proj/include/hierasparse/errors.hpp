// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hierasparse {

// Invalid caller-supplied arguments or configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A well-formed call over corrupt or inconsistent data (bad metadata codes,
// broken index map, malformed container).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem and stream failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void check_data(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

} // namespace detail
} // namespace hierasparse
