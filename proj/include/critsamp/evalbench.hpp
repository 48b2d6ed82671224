#pragma once

// Evaluation protocols and the named experiment harness.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "critsamp/dynsys.hpp"
#include "critsamp/evonet.hpp"
#include "critsamp/sampler.hpp"

namespace critsamp {

enum class EvalMetricKind { trajectory_mse, modal_l2, relative_l2 };

struct EvalProtocol {
    double horizon = 20.0;
    std::size_t n_trajectories = 50;
    EvalMetricKind metric = EvalMetricKind::trajectory_mse;
    std::uint64_t seed = 0;
    /// Keep only start states whose reference trajectory stays in D up to the horizon.
    bool confined = true;
    std::size_t pde_points = 100;
};

/// Horizon 20 / 10 / 5 / 2 for pendulum / nonlinear / Lorenz / Burgers.
EvalProtocol default_protocol(const SystemSpec& sys, std::uint64_t seed = 0);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t diverged = 0;
    std::vector<double> per_trajectory;
    /// Same mean; std taken across time steps of the trajectory-averaged error.
    double step_first_std = 0.0;
};

/// Start states: uniform on D from the protocol's evaluation stream, skipping any
/// within 1e-9 of an oracle u0 in `exclude` and, for confined protocols, any whose
/// reference trajectory leaves D.
std::vector<State> test_starts(const SystemSpec& sys, const EvalProtocol& protocol,
                               const SampleSet* exclude = nullptr);

/// Reference trajectory u(k delta), k = 0..steps, through oracle evaluation calls.
std::vector<State> reference_trajectory(Oracle& oracle, std::span<const double> u0, std::size_t steps);

/// Per-trajectory mean over k = 1..steps of ||u_hat(k) - u(k)||^2 / n; mean and
/// population std across trajectories. Divergent rollouts count as +inf.
MeanStd trajectory_mse(const StepMap& model, Oracle& oracle, const std::vector<State>& starts,
                       std::size_t steps);
MeanStd trajectory_mse(const StepMap& model, const SystemSpec& sys, const EvalProtocol& protocol,
                       const SampleSet* exclude = nullptr);

/// Burgers: roll modal coefficients to the horizon, reconstruct on `pde_points`
/// uniform points of (-pi, pi) and take the RMS pointwise deviation.
MeanStd pde_l2_error(const StepMap& model, const SystemSpec& sys, const EvalProtocol& protocol,
                     const SampleSet* exclude = nullptr);

struct RelativeL2 {
    double per_step = 0.0;
    double per_second = 0.0;
    std::size_t states = 0;
    std::size_t diverged = 0;
};

/// Mean of ||F(u) - Phi(u)|| / ||Phi(u)|| over the test states, for one step and
/// for `per_second_steps` compositions.
RelativeL2 relative_l2(const StepMap& model, const SystemSpec& sys, const std::vector<State>& states,
                       std::size_t per_second_steps = 20);

/// Points sampled along one long reference trajectory after a burn-in; used for
/// the single-trajectory operator benchmark.
std::vector<State> trajectory_states(const SystemSpec& sys, std::span<const double> u0, double burn_in,
                                     std::size_t count, std::size_t stride);

/// Evaluator for the loop that uses the protocol matching the system.
std::function<double(const EvolutionModel&, Oracle&)> protocol_evaluator(const SystemSpec& sys,
                                                                        const EvalProtocol& protocol);

/// Evaluation error of one model under the system's protocol.
MeanStd evaluate_model(const EvolutionModel& model, const SystemSpec& sys, const EvalProtocol& protocol,
                       const SampleSet* exclude = nullptr);

/// Uniform-sampling baseline: F trained on J uniform pairs without augmentation.
EvolutionModel train_baseline(const SystemSpec& sys, std::size_t J, const LoopConfig& config,
                              std::uint64_t seed);

}  // namespace critsamp
