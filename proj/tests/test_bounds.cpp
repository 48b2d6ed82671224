#include "doctest.h"

#include <cmath>

#include <Eigen/Dense>

#include "critsamp/bounds.hpp"

using namespace critsamp;

namespace {

BoundParams params(double c, double delta, double ef, double eg, std::size_t K = 5) {
    BoundParams bp;
    bp.c_h = c;
    bp.delta = delta;
    bp.eps_f = ef;
    bp.eps_g = eg;
    bp.K = K;
    return bp;
}

}  // namespace

TEST_CASE("forward bound arithmetic") {
    const BoundParams bp = params(1.0, 0.1, 0.01, 0.02);
    CHECK(forward_bound(bp, 0.0, 3) == doctest::Approx(0.01 * std::expm1(0.3) / std::expm1(0.1)).epsilon(1e-14));
    CHECK(forward_bound(bp, 0.0, 3) == doctest::Approx(0.0332657).epsilon(1e-5));
    CHECK(forward_bound(bp, 0.25, 0) == 0.25);
    CHECK(forward_bound(bp, 0.25, 2) == doctest::Approx(0.25 * std::exp(0.2) + 0.01 * (std::exp(0.2) - 1) / (std::exp(0.1) - 1)));

    const BoundParams flat = params(0.0, 0.1, 0.01, 0.02);
    CHECK(forward_bound(flat, 1.0, 4) == doctest::Approx(1.0 + 4 * 0.01));
    CHECK(forward_bound(params(0.0, 0.1, 0.0, 0.0), 1.0, 7) == 1.0);
    CHECK(growth_sum(0.0, 0.1, 6) == 6.0);
    CHECK(growth_sum(1e-12, 0.1, 6) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("backward bound arithmetic") {
    const BoundParams bp = params(1.0, 0.1, 0.01, 0.02, 5);
    CHECK(backward_bound(bp, 0.3, 5) == 0.3);
    CHECK(backward_bound(bp, 0.0, 2) == doctest::Approx(0.02 * std::expm1(0.3) / std::expm1(0.1)).epsilon(1e-14));
    CHECK(backward_bound(params(0.0, 0.1, 0.01, 0.02, 5), 0.5, 1) == doctest::Approx(0.5 + 4 * 0.02));
    CHECK_THROWS_AS(backward_bound(bp, 0.0, 6), InvalidArgument);
}

TEST_CASE("bounds grow with the number of steps") {
    const BoundParams bp = params(9.3, 0.1, 0.017, 0.019, 5);
    for (std::size_t k = 1; k <= 5; ++k) {
        CHECK(forward_bound(bp, 0.0, k) >= forward_bound(bp, 0.0, k - 1));
        CHECK(backward_bound(bp, 0.0, k - 1) >= backward_bound(bp, 0.0, k));
    }
}

TEST_CASE("reciprocal bound") {
    BoundParams bp = params(2.0, 0.1, 0.0, 0.0, 4);
    for (std::size_t k = 0; k <= 4; ++k) CHECK(reciprocal_bound(bp, k) == 0.0);

    bp = params(2.0, 0.1, 0.01, 0.02, 4);
    const double second = growth_sum(2.0, 0.1, 4) * 0.01 * std::exp(2.0 * 0.1 * 2) + growth_sum(2.0, 0.1, 2) * 0.02;
    CHECK(reciprocal_bound(bp, 2) == doctest::Approx(second));
    bp.composed = {0.0, 0.001, 0.002, 0.003, 0.004};
    CHECK(reciprocal_bound(bp, 2) == doctest::Approx(std::min(0.002 + growth_sum(2.0, 0.1, 2) * 0.01, second)));
    CHECK(reciprocal_bound(bp, 4) <= growth_sum(2.0, 0.1, 4) * 0.01);
    bp.composed = {0.0, 0.1};
    CHECK_THROWS_AS(bp.validate(), InvalidArgument);
}

TEST_CASE("Lipschitz estimate") {
    const std::vector<double> A{0.3, -1.2, 0.7, 0.1};
    const Hypercube d({-1.0, -1.0}, {1.0, 1.0});
    const auto sys = systems::linear(A, 2, 0.1, d);
    Eigen::Matrix2d M;
    M << A[0], A[1], A[2], A[3];
    const double norm = Eigen::JacobiSVD<Eigen::Matrix2d>(M).singularValues()(0);
    CHECK(estimate_lipschitz(sys, d, 200, 1) == doctest::Approx(1.05 * norm).epsilon(1e-3));
    CHECK(estimate_lipschitz(systems::linear({0.0, 0.0, 0.0, 0.0}, 2, 0.1, d), d, 200, 1) == 0.0);

    const auto pend = systems::pendulum();
    std::vector<double> c;
    for (std::uint64_t s = 1; s <= 5; ++s) c.push_back(estimate_lipschitz(pend, pend.domain, 10000, s));
    const double lo = *std::min_element(c.begin(), c.end()), hi = *std::max_element(c.begin(), c.end());
    CHECK(hi <= lo * 1.02);

    // Lemma 2: one lag expands distances by at most e^{c delta}.
    const double ch = c[0];
    Rng rng(17);
    std::size_t tested = 0;
    while (tested < 200) {
        const State a = pend.domain.sample(rng), b = pend.domain.sample(rng);
        if (!stays_in_domain(pend, a, pend.delta) || !stays_in_domain(pend, b, pend.delta)) continue;
        ++tested;
        const double before = std::sqrt(squared_distance(a, b));
        const double after = std::sqrt(squared_distance(integrate(pend, a, pend.delta), integrate(pend, b, pend.delta)));
        CHECK(after <= std::exp(ch * pend.delta) * before);
    }
}

TEST_CASE("Halton grid") {
    const Hypercube d({0.0, -2.0}, {1.0, 2.0});
    const auto g = halton_grid(d, 64);
    CHECK(g.size() == 64);
    CHECK(g[0][0] == 0.5);
    CHECK(g[0][1] == doctest::Approx(-2.0 + 4.0 / 3.0));
    for (const auto& p : g) CHECK(d.contains(p));
    const auto u = bound_grid(systems::burgers().domain, 50, 3);
    CHECK(u.size() == 50);
    CHECK(u == bound_grid(systems::burgers().domain, 50, 3));
}

TEST_CASE("generalization error estimate") {
    const Hypercube d({-1.0, -1.0}, {1.0, 1.0});
    const auto sys = systems::linear({-0.5, 1.0, -1.0, -0.5}, 2, 0.1, d);
    const auto grid = halton_grid(d, 300);
    const FunctionMap exact = reference_map(sys);
    const EpsEstimate e = estimate_eps(exact, sys, Direction::forward, grid);
    CHECK(e.value <= 1e-9);
    CHECK(e.grid.size() + e.rejected == 300);

    const FunctionMap id(2, [](std::span<const double> u) { return State(u.begin(), u.end()); });
    const EpsEstimate z = estimate_eps(id, sys, Direction::forward, grid);
    double want = 0.0;
    for (const auto& u : z.grid) want = std::max(want, std::sqrt(squared_distance(u, integrate(sys, u, sys.delta))));
    CHECK(z.value == want);

    const FunctionMap back = reference_map(reversed(sys));
    CHECK(estimate_eps(back, sys, Direction::backward, grid).value <= 1e-9);
}

TEST_CASE("composed deviation of exact inverses is zero") {
    const auto sys = systems::pendulum();
    const FunctionMap F = reference_map(sys), G = reference_map(reversed(sys));
    const std::vector<State> pts{State{0.1, 0.2}, State{-0.5, 1.0}};
    const auto c = composed_deviation(F, G, pts, 5);
    REQUIRE(c.size() == 6);
    CHECK(c[0] == 0.0);
    for (double v : c) CHECK(v <= 1e-8);
}

TEST_CASE("bound study on perturbed reference flows") {
    // Constant offsets put the one-step errors well above integration noise.
    const auto sys = systems::pendulum();
    const FunctionMap phi = reference_map(sys), psi = reference_map(reversed(sys));
    const FunctionMap F(2, [&](std::span<const double> u) {
        State v = phi.apply_one(u);
        v[0] += 1e-3;
        return v;
    });
    const FunctionMap G(2, [&](std::span<const double> u) {
        State v = psi.apply_one(u);
        v[1] -= 2e-3;
        return v;
    });
    BoundStudyOptions o;
    o.test_points = 20;
    o.grid_points = 500;
    o.lipschitz_samples = 500;
    o.seed = 2;
    const BoundReport r = bound_study(F, G, sys, o);
    CHECK(r.eligible > 0);
    CHECK(r.params.eps_f == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(r.params.eps_g == doctest::Approx(2e-3).epsilon(1e-6));
    CHECK(r.forward.size() == 6);
    CHECK(r.forward_rate == 1.0);
    CHECK(r.backward_rate == 1.0);
    CHECK(r.reciprocal_rate == 1.0);
    CHECK(r.all_satisfied());
}
