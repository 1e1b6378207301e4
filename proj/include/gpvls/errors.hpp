#pragma once

#include <stdexcept>
#include <string>

namespace gpvls {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape disagreement between tensors.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented precondition (non-finite values, empty lists, bad ids).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Raised by training when a loss or gradient stops being finite.
class TrainingError : public Error {
public:
    TrainingError(const std::string& tensor, const std::string& what)
        : Error(what), tensor_(tensor) {}
    const std::string& tensor() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Bad run configuration or mismatched task/gold pairing.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Benchmark failure rate exceeded the configured threshold.
class RunQualityError : public Error {
public:
    using Error::Error;
};

}  // namespace gpvls
