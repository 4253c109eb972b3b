#pragma once

#include <stdexcept>
#include <string>

namespace bikeflow {

/// Root of every error raised by the library. The CLI maps the three
/// families below onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration or misuse of an API (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: divergence, non-convergence, singular systems (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DomainError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// A CSV or text file that cannot be parsed. Carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class LookupError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

/// Problems reading a serialized model file.
class ModelFormatError : public DataError {
public:
    enum class Kind { version_mismatch, truncated, shape_mismatch, bad_block, malformed };

    ModelFormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Epoch and batch are 1-based; batch 0 marks the validation pass.
class TrainingError : public NumericalError {
public:
    TrainingError(int epoch, int batch, const std::string& what)
        : NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                         ": " + what),
          epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

/// Rank-deficient or otherwise unusable regression design.
class DesignError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace bikeflow
