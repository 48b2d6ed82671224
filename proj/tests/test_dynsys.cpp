#include "doctest.h"

#include <cmath>
#include <numbers>

#include "critsamp/dynsys.hpp"

using namespace critsamp;

namespace {

State random_in(const Hypercube& d, std::uint64_t seed) {
    Rng rng(seed);
    return d.sample(rng);
}

double norm_diff(std::span<const double> a, std::span<const double> b) { return std::sqrt(squared_distance(a, b)); }

double l2(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("vector fields at known points") {
    const auto pend = systems::pendulum();
    CHECK(rhs_eval(pend, State{0.0, 0.0}) == State{0.0, 0.0});
    const State d = rhs_eval(pend, State{std::numbers::pi / 2, 0.0});
    CHECK(d[0] == 0.0);
    CHECK(d[1] == doctest::Approx(-8.91).epsilon(1e-15));
    CHECK(rhs_eval(systems::lorenz(), State{0.0, 0.0, 0.0}) == State{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(rhs_eval(pend, State{1.0}), InvalidArgument);
}

TEST_CASE("integrate: exponential decay closed form") {
    const auto sys = systems::linear({-1.0}, 1, 0.1, Hypercube({-2.0}, {2.0}));
    const State u = integrate(sys, State{1.0}, 1.0);
    CHECK(std::abs(u[0] - std::exp(-1.0)) <= 1e-8);
}

TEST_CASE("integrate: t = 0 is the identity") {
    for (const auto& name : systems::builtin_names()) {
        const auto sys = systems::by_name(name);
        const State u0 = random_in(sys.domain, 7);
        CHECK(integrate(sys, u0, 0.0) == u0);
    }
}

TEST_CASE("integrate: pendulum small-angle motion follows the damped oscillator") {
    // u'' + 0.2 u' + 8.91 u = 0, u(0) = 0.01, u'(0) = 0.
    const double wd = std::sqrt(8.91 - 0.01);
    const double t = 0.1;
    const double a = 0.01 * std::exp(-0.1 * t);
    const double x = a * (std::cos(wd * t) + 0.1 / wd * std::sin(wd * t));
    const double v = -a * (8.91 / wd) * std::sin(wd * t);
    const State u = integrate(systems::pendulum(), State{0.01, 0.0}, t);
    CHECK(std::abs(u[0] - x) <= 1e-4);
    CHECK(std::abs(u[1] - v) <= 1e-4);
    CHECK(std::abs(u[0] - x) <= 1e-6);
}

TEST_CASE("integrate rejects bad input") {
    const auto sys = systems::pendulum();
    CHECK_THROWS_AS(integrate(sys, State{0.0, 0.0}, -1.0), InvalidArgument);
    CHECK_THROWS_AS(integrate(sys, State{NAN, 0.0}, 1.0), InvalidArgument);
}

TEST_CASE("integrate reports divergence with the last valid time") {
    SystemSpec blow = systems::linear({1.0}, 1, 1.0, Hypercube({-1.0}, {1.0}), "blowup");
    blow.rhs = [](std::span<const double> u, std::span<double> du) { du[0] = u[0] * u[0] * u[0]; };
    try {
        (void)integrate(blow, State{10.0}, 1.0);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.last_valid_time() >= 0.0);
        CHECK(e.last_valid_time() < 1.0);
    }
}

TEST_CASE("oracle pairs") {
    Oracle oracle(systems::pendulum());
    const SamplePair p = oracle_pair(oracle, State{0.0, 0.0});
    CHECK(p.u0 == State{0.0, 0.0});
    CHECK(p.u1 == State{0.0, 0.0});
    CHECK(oracle.sample_calls() == 1);
    CHECK(oracle.eval_calls() == 0);
    (void)oracle.evaluate(State{0.1, 0.1}, 0.5);
    CHECK(oracle.sample_calls() == 1);
    CHECK(oracle.eval_calls() == 1);
    CHECK_THROWS_AS(oracle.query(State{10.0, 0.0}, Provenance::oracle_initial), InvalidArgument);
    CHECK_THROWS_AS(oracle.query(State{0.0, 0.0}, Provenance::augmented), InvalidArgument);
}

TEST_CASE("2D nonlinear system keeps the unit circle invariant") {
    Oracle oracle(systems::nonlinear2d());
    for (int i = 0; i < 16; ++i) {
        const double th = 2.0 * std::numbers::pi * i / 16.0;
        const SamplePair p = oracle_pair(oracle, State{std::cos(th), std::sin(th)});
        CHECK(std::abs(l2(p.u1) - 1.0) <= 1e-6);
    }
}

TEST_CASE("Lorenz lag matches the Richardson extrapolated flow") {
    const auto sys = systems::lorenz();
    SystemSpec fine = sys;
    fine.substeps = sys.substeps * 2;
    const State u0{1.0, 1.0, 1.0};
    const State coarse = integrate(sys, u0, sys.delta);
    const State half = integrate(fine, u0, sys.delta);
    State rich(3);
    for (int i = 0; i < 3; ++i) rich[i] = (16.0 * half[i] - coarse[i]) / 15.0;
    CHECK(norm_diff(coarse, rich) <= 1e-8);
    const VerifiedFlow v = integrate_verified(sys, u0, sys.delta);
    CHECK(v.error_estimate <= 1e-8);
}

TEST_CASE("initial sample set") {
    Oracle oracle(systems::pendulum());
    CHECK_THROWS_AS(generate_initial_set(oracle, 0, 1), InvalidArgument);
    const SampleSet a = generate_initial_set(oracle, 50, 11);
    const SampleSet b = generate_initial_set(oracle, 50, 11);
    CHECK(a == b);
    CHECK(a.size() == 50);
    CHECK(a.oracle_count() == 50);
    CHECK_FALSE(a == generate_initial_set(oracle, 50, 12));

    const SampleSet big = generate_initial_set(oracle, 1000, 5);
    const auto& d = oracle.system().domain;
    for (std::size_t i = 0; i < 2; ++i) {
        double mean = 0.0;
        for (const auto& p : big.pairs) {
            CHECK(d.contains(p.u0));
            mean += p.u0[i];
        }
        mean /= 1000.0;
        const double width = d.upper[i] - d.lower[i];
        const double sigma = width / std::sqrt(12.0) / std::sqrt(1000.0);
        CHECK(std::abs(mean - 0.5 * (d.lower[i] + d.upper[i])) <= 3.0 * sigma);
    }
}

TEST_CASE("flow semigroup property") {
    for (const auto& name : systems::builtin_names()) {
        const auto sys = systems::by_name(name);
        for (std::uint64_t s = 0; s < 100; ++s) {
            const State u = random_in(sys.domain, 1000 + s);
            const State two = integrate(sys, integrate(sys, u, sys.delta), sys.delta);
            const State once = integrate(sys, u, 2.0 * sys.delta);
            CHECK(norm_diff(two, once) <= 1e-7);
        }
    }
}

TEST_CASE("sign-flipped field inverts the forward flow") {
    for (const char* name : {"pendulum", "nonlinear"}) {
        const auto sys = systems::by_name(name);
        const auto back = reversed(sys);
        std::size_t tested = 0;
        for (std::uint64_t s = 0; tested < 100; ++s) {
            const State u = random_in(sys.domain, 50 + s);
            if (!stays_in_domain(sys, u, sys.delta)) continue;
            ++tested;
            const State v = integrate(back, integrate(sys, u, sys.delta), sys.delta);
            CHECK(norm_diff(u, v) <= 1e-7);
        }
    }
}

TEST_CASE("Burgers Galerkin right-hand side") {
    const State zero(kBurgersModes, 0.0);
    CHECK(burgers_modal_rhs(zero) == zero);
    State e1(kBurgersModes, 0.0);
    e1[0] = 1.0;
    const State d = burgers_modal_rhs(e1);
    CHECK(d[0] == doctest::Approx(-0.1).epsilon(1e-12));

    // c_j' nonlinear part = -(1/pi) int u u_x sin(jx) dx by midpoint quadrature.
    const int N = 20000;
    for (std::size_t j = 2; j <= kBurgersModes; ++j) {
        double q = 0.0;
        for (int i = 0; i < N; ++i) {
            const double x = -std::numbers::pi + (i + 0.5) * 2.0 * std::numbers::pi / N;
            q += std::sin(x) * std::cos(x) * std::sin(static_cast<double>(j) * x);
        }
        q *= -(2.0 * std::numbers::pi / N) / std::numbers::pi;
        CHECK(std::abs(d[j - 1] - q) <= 1e-10);
    }
    CHECK(d[1] == doctest::Approx(-0.5).epsilon(1e-10));
}

TEST_CASE("Burgers reconstruction respects the boundary") {
    const State zero(kBurgersModes, 0.0);
    const std::vector<double> xs{-3.0, -1.0, 0.0, 2.0};
    for (double v : burgers_reconstruct(zero, xs)) CHECK(v == 0.0);
    State e1(kBurgersModes, 0.0), e2(kBurgersModes, 0.0);
    e1[0] = 1.0;
    e2[1] = 1.0;
    const std::vector<double> half{std::numbers::pi / 2};
    CHECK(burgers_reconstruct(e1, half)[0] == 1.0);
    const std::vector<double> ends{-std::numbers::pi, std::numbers::pi};
    for (double v : burgers_reconstruct(e2, ends)) CHECK(std::abs(v) <= 1e-15);
}

TEST_CASE("viscous dissipation: modal energy never increases") {
    const auto sys = systems::burgers();
    for (std::uint64_t s = 0; s < 10; ++s) {
        State c = random_in(sys.domain, 300 + s);
        double prev = l2(c);
        for (int k = 0; k < 20; ++k) {
            c = integrate(sys, c, 0.1);
            const double now = l2(c);
            CHECK(now <= prev + 1e-9);
            prev = now;
        }
    }
}

TEST_CASE("domain membership along the flow") {
    const auto sys = systems::pendulum();
    CHECK(stays_in_domain(sys, State{0.0, 0.0}, 1.0));
    CHECK_FALSE(stays_in_domain(sys, State{3.1, 6.0}, 1.0));
}
