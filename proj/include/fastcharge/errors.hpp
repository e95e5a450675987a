#pragma once

#include <stdexcept>
#include <string>

namespace fastcharge {

/// Raised when a configuration or parameter value is out of its domain.
/// `parameter()` names the offending field.
class ValidationError : public std::invalid_argument
{
public:
    ValidationError(std::string parameter, const std::string& what)
        : std::invalid_argument(parameter + ": " + what), parameter_(std::move(parameter))
    {}

    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

/// Numerical failure inside the simulator (singular kinetics, bad state).
class SimulationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Training produced non-finite values.
class DivergenceError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace fastcharge
