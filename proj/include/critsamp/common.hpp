#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace critsamp {

/// A point in the state space R^n.
using State = std::vector<double>;

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a reference integration or a network rollout produces a non-finite state.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, double last_valid_time, std::size_t step = 0)
        : std::runtime_error(what), last_valid_time_(last_valid_time), step_(step) {}

    double last_valid_time() const noexcept { return last_valid_time_; }
    std::size_t step() const noexcept { return step_; }

private:
    double last_valid_time_;
    std::size_t step_;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class UndefinedCorrelation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ResumeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace critsamp
