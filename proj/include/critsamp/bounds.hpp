#pragma once

// Error-growth bounds for forward, backward and reciprocal rollouts of a trained
// flow-map pair, and the empirical quantities (Lipschitz constant, generalization
// error, composed-operator deviation) they are evaluated with.

#include <cstdint>
#include <string>
#include <vector>

#include "critsamp/dynsys.hpp"
#include "critsamp/evonet.hpp"

namespace critsamp {

struct BoundParams {
    double c_h = 0.0;    // Lipschitz constant of the vector field on D
    double eps_f = 0.0;  // grid max of ||F - Phi_delta|| on D-hat
    double eps_g = 0.0;  // grid max of ||G - Psi_delta|| on D-bar
    double delta = 0.0;
    std::size_t K = 5;
    /// composed[j] estimates ||G^j o F^j - I|| (grid max, not a certified sup);
    /// j = 0..K. Empty means unknown, which disables that branch of the minimum.
    std::vector<double> composed;

    void validate() const;
};

/// (e^{c j delta} - 1) / (e^{c delta} - 1), and j in the c = 0 limit.
double growth_sum(double c_h, double delta, std::size_t j);

/// e0 e^{c k delta} + growth_sum(k) eps_f.
double forward_bound(const BoundParams& bp, double e0, std::size_t k);
/// eK e^{c (K-k) delta} + growth_sum(K - k) eps_g.
double backward_bound(const BoundParams& bp, double eK, std::size_t k);
/// Backward error of the handoff trace started from the true state:
/// min(composed[K-k] + growth_sum(k) eps_f,
///     growth_sum(K) eps_f e^{c (K-k) delta} + growth_sum(K-k) eps_g).
double reciprocal_bound(const BoundParams& bp, std::size_t k);

/// Max over n_samples uniform points of the spectral norm of the central-difference
/// Jacobian (step 1e-6) of the vector field, times 1.05.
double estimate_lipschitz(const SystemSpec& sys, const Hypercube& domain, std::size_t n_samples,
                          std::uint64_t seed);

/// Halton points (bases 2, 3, 5, ...) scaled to the box, skipping the origin term.
std::vector<State> halton_grid(const Hypercube& domain, std::size_t count);

/// Low-discrepancy points for n <= 3, seeded uniform points above.
std::vector<State> bound_grid(const Hypercube& domain, std::size_t count, std::uint64_t seed);

struct EpsEstimate {
    double value = 0.0;
    std::vector<State> grid;  // eligible points actually used
    std::size_t rejected = 0;
};

/// Max over the grid points in D-hat (forward) or D-bar (backward) of
/// ||model(u) - reference flow(u)||. Membership is checked at 10 interior times.
EpsEstimate estimate_eps(const StepMap& model, const SystemSpec& sys, Direction direction,
                         const std::vector<State>& grid);

/// max over points of ||G^j F^j u - u|| for j = 0..K (entry 0 is 0).
std::vector<double> composed_deviation(const StepMap& fwd, const StepMap& bwd,
                                       const std::vector<State>& points, std::size_t K);

struct BoundRow {
    std::size_t k = 0;
    double empirical = 0.0;  // max over eligible test points
    double bound = 0.0;
    bool satisfied = true;
};

struct BoundReport {
    BoundParams params;
    std::size_t grid_points = 0;
    std::size_t test_points = 0;
    std::size_t eligible = 0;
    std::vector<BoundRow> forward, backward, reciprocal;
    /// Fraction of (eligible point, k) checks satisfied, per kind.
    double forward_rate = 1.0, backward_rate = 1.0, reciprocal_rate = 1.0;

    bool all_satisfied() const;
};

struct BoundStudyOptions {
    std::size_t K = 5;
    std::size_t test_points = 50;
    std::size_t grid_points = 10000;
    std::size_t lipschitz_samples = 10000;
    std::uint64_t seed = 0;
};

/// Checks the three estimates against empirical rollouts from uniform test starts.
/// A start is eligible when its true trajectory, its forward model path and its
/// backward model path stay in D (the hypotheses of the estimates).
BoundReport bound_study(const StepMap& fwd, const StepMap& bwd, const SystemSpec& sys,
                        const BoundStudyOptions& options);

}  // namespace critsamp
