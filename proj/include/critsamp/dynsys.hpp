#pragma once

// Benchmark systems, the reference ("oracle") integrator and sample containers.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "critsamp/common.hpp"
#include "critsamp/rng.hpp"

namespace critsamp {

struct Hypercube {
    std::vector<double> lower;
    std::vector<double> upper;

    Hypercube() = default;
    Hypercube(std::vector<double> lo, std::vector<double> hi);

    std::size_t dim() const { return lower.size(); }
    bool contains(std::span<const double> u, double tol = 0.0) const;
    double diagonal() const;
    State center() const;
    State sample(Rng& rng) const;
};

/// du/dt = rhs(u). Writes the derivative into `du`.
using Rhs = std::function<void(std::span<const double> u, std::span<double> du)>;

struct SystemSpec {
    std::string name;
    std::size_t dim = 0;
    Rhs rhs;
    double delta = 0.0;
    Hypercube domain;
    /// RK4 substeps per lag for the reference integrator.
    std::size_t substeps = 100;

    void validate() const;
};

namespace systems {
/// du1 = u2, du2 = -0.2 u2 - 8.91 sin u1 on [-pi,pi] x [-2pi,2pi], lag 0.1.
SystemSpec pendulum();
/// Attracting unit circle on [-2,2]^2, lag 0.1.
SystemSpec nonlinear2d();
/// Lorenz-63 on [-25,25]^2 x [0,50], lag 0.01.
SystemSpec lorenz();
/// Lorenz-63 with lag 0.05 (single-trajectory operator benchmark).
SystemSpec lorenz_coarse();
/// Sine-Galerkin reduction of viscous Burgers, 9 modes, lag 0.05.
SystemSpec burgers();
/// du/dt = A u, A row-major n x n.
SystemSpec linear(std::vector<double> A, std::size_t n, double delta, Hypercube domain,
                  std::string name = "linear");

SystemSpec by_name(std::string_view name);
std::vector<std::string> builtin_names();
}  // namespace systems

/// The system with negated vector field; its forward flow is the backward flow of `sys`.
SystemSpec reversed(const SystemSpec& sys);

State rhs_eval(const SystemSpec& sys, std::span<const double> u);

/// Reference flow Phi_t(u0) using fixed-step RK4 with h <= delta / substeps.
State integrate(const SystemSpec& sys, std::span<const double> u0, double t);

struct VerifiedFlow {
    State value;           // fine-step result
    double error_estimate;  // ||fine - coarse|| / 15 (Richardson, order 4)
};

/// Integrates with h and h/2 and reports the step-halving error estimate.
VerifiedFlow integrate_verified(const SystemSpec& sys, std::span<const double> u0, double t);

/// Whether Phi_s(u) stays in the domain at `checkpoints` equally spaced interior
/// times s in (0, t] (and at s = 0).
bool stays_in_domain(const SystemSpec& sys, std::span<const double> u, double t,
                     std::size_t checkpoints = 10);

// -------------------------------------------------------------------------------------
// Burgers modal reduction

inline constexpr std::size_t kBurgersModes = 9;
inline constexpr std::size_t kBurgersGrid = 256;
inline constexpr double kBurgersViscosity = 0.1;

/// Galerkin time derivative of the sine coefficients c_j (basis sin(jx), j = 1..9).
State burgers_modal_rhs(std::span<const double> coeffs);

/// sum_j c_j sin(j x) at each x.
std::vector<double> burgers_reconstruct(std::span<const double> coeffs,
                                        std::span<const double> x);

// -------------------------------------------------------------------------------------
// Samples

enum class Provenance { oracle_initial, oracle_critical, augmented };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct SamplePair {
    State u0;
    State u1;
    Provenance provenance = Provenance::oracle_initial;

    bool is_oracle() const { return provenance != Provenance::augmented; }
    bool operator==(const SamplePair&) const = default;
};

struct SampleSet {
    std::vector<SamplePair> pairs;
    int iteration = 0;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
    std::size_t dim() const { return pairs.empty() ? 0 : pairs.front().u0.size(); }
    /// Pairs counted as collected samples (augmented ones excluded).
    std::size_t oracle_count() const;
    SampleSet oracle_only() const;
    bool contains_oracle_u0(std::span<const double> u, double tol) const;

    bool operator==(const SampleSet&) const = default;
};

/// Wraps a system as the costly sample source and counts its use.
class Oracle {
public:
    explicit Oracle(SystemSpec sys) : sys_(std::move(sys)) {}

    const SystemSpec& system() const { return sys_; }

    /// A training sample (u0, Phi_delta(u0)); counted as a sample call.
    SamplePair query(std::span<const double> u0, Provenance provenance);

    /// Phi_t(u0) for evaluation purposes; counted separately from samples.
    State evaluate(std::span<const double> u0, double t);

    std::uint64_t sample_calls() const { return sample_calls_; }
    std::uint64_t eval_calls() const { return eval_calls_; }
    void set_counters(std::uint64_t samples, std::uint64_t evals) {
        sample_calls_ = samples;
        eval_calls_ = evals;
    }

private:
    SystemSpec sys_;
    std::uint64_t sample_calls_ = 0;
    std::uint64_t eval_calls_ = 0;
};

SamplePair oracle_pair(Oracle& oracle, std::span<const double> u0,
                       Provenance provenance = Provenance::oracle_initial);

/// J0 pairs with inputs i.i.d. uniform on the domain. Point j is drawn from its own
/// stream derived from (seed, j).
SampleSet generate_initial_set(Oracle& oracle, std::size_t J0, std::uint64_t seed);

}  // namespace critsamp
