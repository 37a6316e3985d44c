#pragma once

#include <stdexcept>
#include <string>

namespace mhdshred {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

class PhysicsError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Raised when a requested step size exceeds a stability bound.
class TimeStepError : public Error {
public:
    TimeStepError(const std::string& what, double suggested_dt)
        : Error(what + " (suggested dt <= " + std::to_string(suggested_dt) + ")"),
          suggested_dt_(suggested_dt) {}
    double suggested_dt() const noexcept { return suggested_dt_; }

private:
    double suggested_dt_;
};

/// A simulation step failed; carries the stored-frame index being computed.
class SimulationError : public Error {
public:
    SimulationError(const std::string& cause, int frame)
        : Error("simulation aborted in frame " + std::to_string(frame) + ": " + cause), frame_(frame) {}
    int frame() const noexcept { return frame_; }

private:
    int frame_;
};

class ScalingError : public Error {
public:
    using Error::Error;
};

class SensorPlacementError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace mhdshred
