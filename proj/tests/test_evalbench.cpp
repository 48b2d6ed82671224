#include "doctest.h"

#include <cmath>
#include <numbers>

#include "critsamp/evalbench.hpp"

using namespace critsamp;

namespace {

EvalProtocol small(const SystemSpec& sys, std::size_t n = 5) {
    EvalProtocol p = default_protocol(sys, 11);
    p.n_trajectories = n;
    return p;
}

FunctionMap identity(std::size_t n) {
    return FunctionMap(n, [](std::span<const double> u) { return State(u.begin(), u.end()); });
}

}  // namespace

TEST_CASE("protocol defaults per system") {
    CHECK(default_protocol(systems::pendulum()).horizon == 20.0);
    CHECK(default_protocol(systems::nonlinear2d()).horizon == 10.0);
    CHECK(default_protocol(systems::lorenz()).horizon == 5.0);
    const EvalProtocol b = default_protocol(systems::burgers());
    CHECK(b.horizon == 2.0);
    CHECK(b.metric == EvalMetricKind::modal_l2);
    CHECK(b.pde_points == 100);
    CHECK(default_protocol(systems::pendulum()).n_trajectories == 50);
}

TEST_CASE("the reference flow as a model has no error") {
    for (const char* name : {"pendulum", "nonlinear", "lorenz"}) {
        const SystemSpec sys = systems::by_name(name);
        const MeanStd r = trajectory_mse(reference_map(sys), sys, small(sys));
        CHECK(r.mean <= 1e-12);
        CHECK(r.diverged == 0);
    }
    const SystemSpec b = systems::burgers();
    CHECK(pde_l2_error(reference_map(b), b, small(b)).mean <= 1e-10);
    const SystemSpec lc = systems::lorenz_coarse();
    const auto states = trajectory_states(lc, State{1.0, 1.0, 1.0}, 10.0, 20, 2);
    const RelativeL2 rel = relative_l2(reference_map(lc), lc, states);
    CHECK(rel.per_step <= 1e-12);
    CHECK(rel.per_second <= 1e-12);
}

TEST_CASE("trajectory MSE on a hand-computed rollout") {
    // Zero vector field: the truth is constant, the model scales by 1.1.
    const SystemSpec sys = systems::linear({0.0, 0.0, 0.0, 0.0}, 2, 0.5, Hypercube({-5.0, -5.0}, {5.0, 5.0}));
    const FunctionMap model(2, [](std::span<const double> u) { return State{1.1 * u[0], 1.1 * u[1]}; });
    Oracle oracle(sys);
    const std::vector<State> starts{State{1.0, 0.0}, State{2.0, 0.0}};
    const MeanStd r = trajectory_mse(model, oracle, starts, 2);
    // Per-step errors 0.1 u and 0.21 u; mean over 2 steps of ||e||^2 / 2.
    const double t1 = (0.01 + 0.0441) / 2.0 / 2.0;
    const double t2 = 4.0 * t1;
    REQUIRE(r.per_trajectory.size() == 2);
    CHECK(r.per_trajectory[0] == doctest::Approx(t1).epsilon(1e-12));
    CHECK(r.per_trajectory[1] == doctest::Approx(t2).epsilon(1e-12));
    CHECK(r.mean == doctest::Approx(0.5 * (t1 + t2)).epsilon(1e-12));
    CHECK(r.std == doctest::Approx(0.5 * (t2 - t1)).epsilon(1e-12));
}

TEST_CASE("divergent rollouts count as infinite error") {
    const SystemSpec sys = systems::pendulum();
    const FunctionMap blow(2, [](std::span<const double> u) { return State{u[0] * 1e200 + 1.0, u[1] * 1e200 + 1.0}; });
    const MeanStd r = trajectory_mse(blow, sys, small(sys, 3));
    CHECK(r.diverged == 3);
    CHECK(r.mean == INFINITY);
}

TEST_CASE("Burgers field error against direct reconstruction") {
    const SystemSpec sys = systems::burgers();
    const EvalProtocol p = small(sys, 3);
    const MeanStd r = pde_l2_error(identity(9), sys, p);
    const auto starts = test_starts(sys, p);
    std::vector<double> x(100);
    for (std::size_t i = 0; i < 100; ++i) x[i] = -std::numbers::pi + 2.0 * std::numbers::pi * (i + 0.5) / 100.0;
    double mean = 0.0;
    for (const auto& u0 : starts) {
        const auto a = burgers_reconstruct(u0, x);
        const auto b = burgers_reconstruct(integrate(sys, u0, 2.0), x);
        double s = 0.0;
        for (std::size_t i = 0; i < 100; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        mean += std::sqrt(s / 100.0) / static_cast<double>(starts.size());
    }
    CHECK(r.mean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("relative l2 of the identity map") {
    const SystemSpec sys = systems::lorenz_coarse();
    const auto states = trajectory_states(sys, State{1.0, 1.0, 1.0}, 10.0, 30, 3);
    CHECK(states.size() == 30);
    const RelativeL2 r = relative_l2(identity(3), sys, states);
    double want = 0.0;
    for (const auto& u : states) {
        const State phi = integrate(sys, u, sys.delta);
        want += std::sqrt(squared_distance(u, phi)) / std::sqrt(squared_distance(phi, State(3, 0.0)));
    }
    CHECK(r.per_step == doctest::Approx(want / 30.0).epsilon(1e-12));
    CHECK(r.states == 30);
}

TEST_CASE("test starts are disjoint from training inputs and deterministic") {
    const SystemSpec sys = systems::pendulum();
    const EvalProtocol p = small(sys, 20);
    const auto starts = test_starts(sys, p);
    CHECK(starts == test_starts(sys, p));
    CHECK(starts.size() == 20);
    for (const auto& u : starts) CHECK(stays_in_domain(sys, u, p.horizon, 200));

    SampleSet train;
    Oracle oracle(sys);
    for (std::size_t i = 0; i < 5; ++i) train.pairs.push_back(oracle.query(starts[i], Provenance::oracle_initial));
    const auto fresh = test_starts(sys, p, &train);
    for (const auto& u : fresh) CHECK_FALSE(train.contains_oracle_u0(u, 1e-9));

    const MeanStd a = trajectory_mse(identity(2), sys, p);
    const MeanStd b = trajectory_mse(identity(2), sys, p);
    CHECK(a.mean == b.mean);
    CHECK(a.per_trajectory == b.per_trajectory);
}
