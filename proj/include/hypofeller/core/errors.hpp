#pragma once

#include <stdexcept>
#include <string>

namespace hfl {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (e.g. negative Laplace argument).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed argument: wrong sizes, non-positive counts, mismatched grids.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A model oracle returned something inconsistent with its contract.
class ModelError : public Error {
public:
    using Error::Error;
};

/// The requested derivative order exceeds what the model's jet oracle supports.
class CapabilityError : public Error {
public:
    CapabilityError(const std::string& what, int required_order)
        : Error(what + " (requires jet order " + std::to_string(required_order) + ")"),
          required_order_(required_order) {}

    int required_order() const noexcept { return required_order_; }

private:
    int required_order_;
};

/// Raised when numerical integration produces a non-finite state.
class ExplosionError : public Error {
public:
    ExplosionError(const std::string& what, double time)
        : Error(what + " at t = " + std::to_string(time)), time_(time) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

/// The inverse-flow certificate ||K J - I|| exceeded its tolerance.
class FlowDivergenceError : public Error {
public:
    FlowDivergenceError(const std::string& what, double time, double defect)
        : Error(what + " at t = " + std::to_string(time) + " (defect " + std::to_string(defect) +
                "); try a finer grid or smaller h_max"),
          time_(time),
          defect_(defect) {}

    double time() const noexcept { return time_; }
    double defect() const noexcept { return defect_; }

private:
    double time_;
    double defect_;
};

}  // namespace hfl
