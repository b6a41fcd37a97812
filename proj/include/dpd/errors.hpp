#pragma once

#include <stdexcept>
#include <string>

namespace dpd {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration value violates a documented invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A signal does not match the frame structure it is declared to carry.
class FramingError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for its input (zero power, zero reference energy).
class MetricError : public Error {
public:
    using Error::Error;
};

/// Drive level outside the accepted PA input range.
class InputRangeError : public Error {
public:
    using Error::Error;
};

/// An estimate is undefined (for example a gain fitted against a zero-energy reference).
class EstimateError : public Error {
public:
    using Error::Error;
};

/// A least-squares system is too ill-conditioned to trust.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double condition_estimate)
        : Error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
          condition_(condition_estimate) {}

    double condition_estimate() const noexcept { return condition_; }

private:
    double condition_;
};

/// Training produced a non-finite gradient or loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// A segment, buffer or window does not fit the data it is applied to.
class SizingError : public Error {
public:
    using Error::Error;
};

/// Signals that must share a grid (sample rate, length) do not.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Malformed text input (model, profile, config or CSV file).
class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace dpd
