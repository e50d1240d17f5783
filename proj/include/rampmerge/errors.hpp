#pragma once

#include <stdexcept>
#include <string>

namespace rampmerge {

/// A physical limit of the powertrain was violated by a caller-supplied value.
struct ConstraintViolation : std::domain_error {
    using std::domain_error::domain_error;
};

/// The battery cannot deliver the requested power at the current SOC.
struct BatterySaturation : std::range_error {
    BatterySaturation(const std::string& what, double max_power)
        : std::range_error(what), max_feasible_power(max_power) {}
    double max_feasible_power;
};

/// Malformed or out-of-range configuration (unknown keys, wrong types, bad values).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// API misuse, e.g. stepping an episode that already terminated.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Checkpoint could not be parsed or does not match the requested evaluator.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rampmerge
