#pragma once

#include <stdexcept>
#include <string>

namespace arq {

/// Raised while reading a configuration document; carries the offending key
/// and line so the CLI can point at the exact spot.
class parse_error : public std::runtime_error {
public:
    parse_error(std::string key, int line, const std::string& message)
        : std::runtime_error("parse error at line " + std::to_string(line) + ", key '" + key +
                             "': " + message),
          key_(std::move(key)),
          line_(line) {}

    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

private:
    std::string key_;
    int line_;
};

/// The requested allocation problem has an empty feasible set.
class infeasible_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too few usable data points for an estimator.
class insufficient_data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problem size outside the supported range of an exhaustive routine.
class unsupported_size_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace arq
