#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "critsamp/evonet.hpp"
#include "critsamp/sampler.hpp"

using namespace critsamp;

namespace {

NetArchitecture evo_arch(std::size_t n) {
    NetArchitecture a;
    a.input_dim = n;
    a.output_dim = n;
    a.blocks = 1;
    a.layers_per_block = 3;
    a.width = 20;
    return a;
}

FunctionMap linear_map(double a, double b, double c, double d) {
    return FunctionMap(2, [=](std::span<const double> u) { return State{a * u[0] + b * u[1], c * u[0] + d * u[1]}; });
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

}  // namespace

TEST_CASE("reversing pairs") {
    SampleSet S;
    S.pairs.push_back({State{1.0, 2.0}, State{3.0, 4.0}, Provenance::oracle_initial});
    S.pairs.push_back({State{0.0, 0.0}, State{0.0, 0.0}, Provenance::oracle_critical});
    S.pairs.push_back({State{5.0, 6.0}, State{7.0, 8.0}, Provenance::augmented});
    const SampleSet R = reverse_pairs(S);
    CHECK(R.pairs[0].u0 == State{3.0, 4.0});
    CHECK(R.pairs[0].u1 == State{1.0, 2.0});
    CHECK(R.pairs[1] == S.pairs[1]);
    CHECK(R.pairs[2].provenance == Provenance::augmented);
    CHECK(reverse_pairs(R) == S);
    CHECK(reverse_pairs(SampleSet{}).empty());
}

TEST_CASE("rollouts") {
    const EvolutionModel zero{Direction::forward, evo_arch(2), zero_params(evo_arch(2))};
    const State u0{0.3, -0.7};
    const auto one = rollout(zero, u0, 0);
    CHECK(one.size() == 1);
    CHECK(one[0] == u0);
    for (const auto& s : rollout(zero, u0, 12)) CHECK(s == u0);

    const EvolutionModel m{Direction::forward, evo_arch(2), init_params(evo_arch(2), 5)};
    const auto full = rollout(m, u0, 9);
    const auto head = rollout(m, u0, 4);
    const auto tail = rollout(m, head.back(), 5);
    for (std::size_t k = 0; k <= 4; ++k) CHECK(full[k] == head[k]);
    for (std::size_t k = 0; k <= 5; ++k) CHECK(full[4 + k] == tail[k]);
}

TEST_CASE("rollout divergence names the first bad state") {
    const FunctionMap blow(1, [](std::span<const double> u) { return State{u[0] * 1e200}; });
    try {
        (void)rollout(blow, State{1.0}, 5);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 2);
    }
}

TEST_CASE("reciprocal trace of exact inverses") {
    const FunctionMap F = linear_map(2.0, 0.0, 0.0, 0.5);
    const FunctionMap G = linear_map(0.5, 0.0, 0.0, 2.0);
    const ReciprocalTrace t = reciprocal_trace(F, G, State{0.75, -1.25}, 5);
    REQUIRE(t.forward_path.size() == 6);
    REQUIRE(t.backward_path.size() == 6);
    for (std::size_t k = 0; k <= 5; ++k) CHECK(t.forward_path[k] == t.backward_path[k]);

    const ReciprocalTrace z = reciprocal_trace(F, G, State{0.75, -1.25}, 0);
    CHECK(z.forward_path.size() == 1);
    CHECK(z.backward_path[0] == z.forward_path[0]);

    // A rotation-scaling and its inverse agree to rounding.
    const double c = std::cos(0.3) * 1.1, s = std::sin(0.3) * 1.1, det = c * c + s * s;
    const FunctionMap R = linear_map(c, -s, s, c);
    const FunctionMap Ri = linear_map(c / det, s / det, -s / det, c / det);
    const ReciprocalTrace r = reciprocal_trace(R, Ri, State{0.4, 0.9}, 8);
    CHECK(r.backward_path[8] == r.forward_path[8]);
    for (std::size_t k = 0; k <= 8; ++k) {
        CHECK(std::sqrt(squared_distance(r.forward_path[k], r.backward_path[k])) <= 1e-9);
    }
}

TEST_CASE("training on the identity flow learns the identity") {
    const Hypercube d({-1.0, -1.0}, {1.0, 1.0});
    SampleSet S;
    Rng rng(4);
    for (int i = 0; i < 400; ++i) {
        const State u = d.sample(rng);
        S.pairs.push_back({u, u, Provenance::oracle_initial});
    }
    TrainConfig c;
    c.seed = 2;
    const EvolutionModel m = train_evolution(S, Direction::forward, evo_arch(2), c);
    // Mean drift over random starts; the worst start sits in a corner of D.
    double mean = 0.0;
    for (int t = 0; t < 50; ++t) {
        const State u = d.sample(rng);
        const auto path = rollout(m, u, 10);
        mean += std::sqrt(squared_distance(path.back(), u)) / 50.0;
    }
    CHECK(mean <= 1e-3);
}

TEST_CASE("a zero consistency weight leaves training unchanged") {
    const SystemSpec sys = systems::pendulum();
    Oracle oracle(sys);
    const SampleSet S = generate_initial_set(oracle, 60, 3);
    TrainConfig tc;
    tc.epochs = 10;
    tc.seed = 7;
    const SpatialModel sdn = train_sdn(S, SpatialHyper::defaults_for(2), tc, sys.domain);
    ConsistencyOptions opt;
    opt.spatial = &sdn;
    opt.spatial_samples = &S;
    opt.domain = &sys.domain;
    opt.points = 50;

    const EvolutionModel plain = train_evolution(S, Direction::forward, evo_arch(2), tc);
    const EvolutionModel zero = train_evolution(S, Direction::forward, evo_arch(2), tc, &opt);
    CHECK(plain == zero);

    TrainConfig weighted = tc;
    weighted.consistency_weight = 0.1;
    const EvolutionModel with = train_evolution(S, Direction::forward, evo_arch(2), weighted, &opt);
    CHECK_FALSE(with.params == plain.params);
    // The backward model ignores the consistency term.
    const EvolutionModel g1 = train_evolution(S, Direction::backward, evo_arch(2), tc);
    const EvolutionModel g2 = train_evolution(S, Direction::backward, evo_arch(2), weighted, &opt);
    CHECK(g1.params == g2.params);
    CHECK(g1.direction == Direction::backward);
}

TEST_CASE("trained models have smaller reciprocal error than untrained ones") {
    const SystemSpec sys = systems::pendulum();
    Oracle oracle(sys);
    const SampleSet S = generate_initial_set(oracle, 400, 21);
    TrainConfig tc;
    tc.seed = 1;
    const EvolutionModel F = train_evolution(S, Direction::forward, evo_arch(2), tc);
    tc.seed = 2;
    const EvolutionModel G = train_evolution(S, Direction::backward, evo_arch(2), tc);
    const EvolutionModel F0{Direction::forward, evo_arch(2), init_params(evo_arch(2), 1)};
    const EvolutionModel G0{Direction::backward, evo_arch(2), init_params(evo_arch(2), 2)};

    std::vector<double> grid;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            grid.push_back(-3.0 + 6.0 * (i + 0.5) / 20.0);
            grid.push_back(-6.0 + 12.0 * (j + 0.5) / 20.0);
        }
    }
    const auto trained = reciprocal_errors(NetworkMap(F), NetworkMap(G), grid, 400, 1);
    const auto untrained = reciprocal_errors(NetworkMap(F0), NetworkMap(G0), grid, 400, 1);
    CHECK(percentile(trained, 0.5) < percentile(untrained, 0.9));
}
