#pragma once

#include <stdexcept>
#include <string>

namespace qdsim {

enum class ErrorCategory {
    InvalidParameter,
    Domain,
    NumericalAccuracy,
    Shape,
    IntegrationDiverged,
    Validation,
    Io,
};

const char* to_string(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

// Quadrature did not reach the requested tolerance.
class AccuracyError : public Error {
public:
    AccuracyError(const std::string& what, double achieved)
        : Error(ErrorCategory::NumericalAccuracy, what), achieved_(achieved) {}

    double achieved_error() const noexcept { return achieved_; }

private:
    double achieved_;
};

// Propagation left the physical state manifold.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double time_ps)
        : Error(ErrorCategory::IntegrationDiverged, what), time_(time_ps) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

}  // namespace qdsim
