#pragma once

#include <stdexcept>
#include <string>

namespace slackdyn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// netcore
class ZeroImpedanceBranch : public Error { using Error::Error; };
class DisconnectedGraph : public Error { using Error::Error; };
class IndexOutOfRange : public Error { using Error::Error; };
class InvalidNetwork : public Error { using Error::Error; };

// powerflow
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, int iterations, double mismatch)
        : Error(what), iterations_(iterations), mismatch_(mismatch) {}
    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }

private:
    int iterations_;
    double mismatch_;
};
class SingularJacobian : public Error { using Error::Error; };
class NoSlackParticipant : public Error { using Error::Error; };

// devices
class ConfigurationError : public Error { using Error::Error; };
class DcSourceAbsent : public ConfigurationError { using ConfigurationError::ConfigurationError; };
class EmptyMachineSet : public Error { using Error::Error; };

// dynsim
class PowerFlowFailed : public Error { using Error::Error; };
class DeviceInitInfeasible : public Error {
public:
    DeviceInitInfeasible(const std::string& what, int device) : Error(what), device_(device) {}
    int device() const noexcept { return device_; }

private:
    int device_;
};

// slackcheck
class TrajectoryTooShort : public Error { using Error::Error; };
class NoPeriodDetected : public Error { using Error::Error; };
class NoSlackDevice : public Error { using Error::Error; };
class IdentityViolated : public Error {
public:
    IdentityViolated(const std::string& what, int device, double t) : Error(what), device_(device), t_(t) {}
    int device() const noexcept { return device_; }
    double time() const noexcept { return t_; }

private:
    int device_;
    double t_;
};
class ResidualTransientPower : public Error {
public:
    ResidualTransientPower(const std::string& what, int device) : Error(what), device_(device) {}
    int device() const noexcept { return device_; }

private:
    int device_;
};

// case files and trajectories on disk
class ParseError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };

}  // namespace slackdyn
