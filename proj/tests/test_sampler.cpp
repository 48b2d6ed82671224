#include "doctest.h"

#include <cmath>
#include <numeric>

#include "critsamp/evalbench.hpp"
#include "critsamp/sampler.hpp"

using namespace critsamp;

namespace {

FunctionMap shift(double a) {
    return FunctionMap(1, [a](std::span<const double> u) { return State{u[0] + a}; });
}

ErrorField field_of(std::vector<double> points, std::size_t dim, std::vector<double> recip,
                    std::vector<double> truth = {}) {
    ErrorField f;
    f.dim = dim;
    f.points = std::move(points);
    f.reciprocal = std::move(recip);
    f.truth = std::move(truth);
    return f;
}

LoopConfig quick_loop(const SystemSpec& sys, std::size_t budget, std::uint64_t seed = 1) {
    LoopConfig c = default_loop_config(sys);
    c.seed = seed;
    c.budget = budget;
    c.train.epochs = 15;
    c.augment_cap = 600;
    c.consistency_points = 100;
    return c;
}

bool same_history(const std::vector<HistoryRow>& a, const std::vector<HistoryRow>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        HistoryRow x = a[i], y = b[i];
        x.seconds = y.seconds = 0.0;
        const bool nan_eq = (std::isnan(x.eval_error) && std::isnan(y.eval_error)) || x.eval_error == y.eval_error;
        const bool nan_gt = (std::isnan(x.grid_truth) && std::isnan(y.grid_truth)) || x.grid_truth == y.grid_truth;
        if (!(x.iteration == y.iteration && x.samples == y.samples && x.mean_recip == y.mean_recip &&
              x.max_recip == y.max_recip && x.infinite == y.infinite && nan_eq && nan_gt &&
              x.oracle_calls == y.oracle_calls && x.eval_calls == y.eval_calls)) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("reciprocal error closed forms") {
    const double eps = 0.125;
    const FunctionMap f = shift(1.0);
    const FunctionMap g = shift(-1.0 + eps);
    // u_hat = (0, 1, 2); u_bar(2) = 2, u_bar(1) = 1 + eps, u_bar(0) = 2 eps.
    const ReciprocalTrace t = reciprocal_trace(f, g, State{0.0}, 2);
    CHECK(t.backward_path[1][0] == 1.0 + eps);
    CHECK(t.backward_path[0][0] == 2.0 * eps);
    CHECK(reciprocal_error(f, g, State{0.0}, 2) == eps * eps + 4.0 * eps * eps);

    // A backward map whose trace is (eps, 1 + eps, 2): the error is 2 eps^2.
    const FunctionMap g2(1, [eps](std::span<const double> u) {
        return State{u[0] >= 1.5 ? 1.0 + eps : eps};
    });
    CHECK(reciprocal_error(f, g2, State{0.0}, 2) == 2.0 * eps * eps);

    CHECK(reciprocal_error(f, g, State{0.3}, 0) == 0.0);
    CHECK(reciprocal_error(shift(0.5), shift(-0.5), State{0.25}, 5) == 0.0);
}

TEST_CASE("reciprocal error is nonnegative and infinite on divergence") {
    const FunctionMap f(1, [](std::span<const double> u) { return State{std::sin(3.0 * u[0]) + u[0]}; });
    const FunctionMap g(1, [](std::span<const double> u) { return State{0.9 * u[0] - 0.1}; });
    for (double x = -2.0; x <= 2.0; x += 0.1) CHECK(reciprocal_error(f, g, State{x}, 4) >= 0.0);
    const FunctionMap blow(1, [](std::span<const double> u) { return State{u[0] * 1e300}; });
    CHECK(reciprocal_error(blow, g, State{2.0}, 3) == kInfinity);
    const std::vector<double> X{2.0, 0.0};
    const auto batch = reciprocal_errors(blow, g, X, 2, 3);
    CHECK(batch[0] == kInfinity);
    CHECK(batch[1] == 0.0 + reciprocal_error(blow, g, State{0.0}, 3));
}

TEST_CASE("true modeling error") {
    const SystemSpec sys = systems::pendulum();
    Oracle oracle(sys);
    const FunctionMap truth = reference_map(sys);
    CHECK(true_modeling_error(truth, oracle, State{0.0, 0.0}) == 0.0);
    const State u{0.5, 1.0};
    const FunctionMap id(2, [](std::span<const double> v) { return State(v.begin(), v.end()); });
    const State phi = integrate(sys, u, sys.delta);
    CHECK(true_modeling_error(id, oracle, u) == doctest::Approx(std::sqrt(squared_distance(u, phi))));
    CHECK(oracle.eval_calls() == 2);
    CHECK(oracle.sample_calls() == 0);
}

TEST_CASE("error field") {
    const FunctionMap f = shift(1.0), g = shift(-0.9);
    const ErrorField one = error_field(f, g, std::vector<State>{State{0.5}}, 3);
    CHECK(one.size() == 1);
    CHECK_FALSE(one.has_truth());
    CHECK_THROWS_AS(error_field(f, g, std::vector<State>{}, 3), InvalidArgument);

    const SystemSpec sys = systems::pendulum();
    const FunctionMap F(2, [](std::span<const double> u) { return State{u[0] + 0.1 * u[1], u[1] - 0.5 * std::sin(u[0])}; });
    const FunctionMap G(2, [](std::span<const double> u) { return State{u[0] - 0.1 * u[1], u[1] + 0.45 * std::sin(u[0])}; });
    std::vector<State> pts;
    Rng rng(3);
    for (int i = 0; i < 30; ++i) pts.push_back(sys.domain.sample(rng));
    std::vector<State> perm(pts.rbegin(), pts.rend());
    Oracle oracle(sys);
    const ErrorField a = error_field(F, G, pts, 5, &oracle);
    const ErrorField b = error_field(F, G, perm, 5, &oracle, 4);
    CHECK(a.has_truth());
    CHECK(oracle.eval_calls() == 60);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(a.reciprocal[i] == b.reciprocal[29 - i]);
        CHECK(a.truth[i] == b.truth[29 - i]);
    }
    const ErrorField c = model_confined(a, F, 5, sys.domain);
    CHECK(c.size() <= a.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto path = rollout(F, c.point(i), 5);
        if (std::isfinite(c.reciprocal[i])) {
            for (const auto& s : path) CHECK(sys.domain.contains(s));
        }
    }
}

TEST_CASE("correlation") {
    std::vector<double> e{0.1, 0.5, 0.3, 2.0, 0.05, 1.1};
    std::vector<double> twice, cubed;
    for (double v : e) {
        twice.push_back(2.0 * v);
        cubed.push_back(std::exp(v) * v * v * v);
    }
    CHECK(pearson(e, twice) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(spearman(e, cubed) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pearson(e, cubed) < 1.0);

    const ErrorField f = field_of(std::vector<double>(7, 0.0), 1, {0.1, 0.5, kInfinity, 0.3, 2.0, 0.05, 1.1},
                                  {0.2, 1.0, 7.0, 0.6, 4.0, 0.1, 2.2});
    const Correlation r = correlation(f);
    CHECK(r.used == 6);
    CHECK(r.pearson == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.spearman == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(pearson(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), UndefinedCorrelation);
    CHECK_THROWS_AS(correlation(field_of({0.0}, 1, {1.0})), InvalidArgument);
}

TEST_CASE("peak selection") {
    SUBCASE("single strict maximum") {
        const ErrorField f = field_of({0.0, 1.0, 2.0, 3.0}, 1, {0.1, 0.9, 0.3, 0.2});
        const PeakSelection p = select_peaks(f, 1, 0.0);
        CHECK(p.indices == std::vector<std::size_t>{1});
        CHECK(p.points[0] == State{1.0});
    }
    SUBCASE("ties go to the lowest index") {
        const ErrorField f = field_of({0.0, 1.0, 2.0}, 1, {0.5, 0.9, 0.9});
        CHECK(select_peaks(f, 1, 0.0).indices == std::vector<std::size_t>{1});
    }
    SUBCASE("infinite errors are picked first") {
        const ErrorField f = field_of({0.0, 1.0, 2.0}, 1, {0.5, kInfinity, 0.9});
        CHECK(select_peaks(f, 2, 0.0).indices == std::vector<std::size_t>{1, 2});
    }
    SUBCASE("two bumps with suppression") {
        std::vector<double> pts, vals;
        const double c1x = -0.5, c1y = 0.25, c2x = 0.6, c2y = -0.4, w = 0.1;
        for (int i = 0; i < 41; ++i) {
            for (int j = 0; j < 41; ++j) {
                const double x = -1.0 + i * 0.05, y = -1.0 + j * 0.05;
                pts.push_back(x);
                pts.push_back(y);
                const double d1 = (x - c1x) * (x - c1x) + (y - c1y) * (y - c1y);
                const double d2 = (x - c2x) * (x - c2x) + (y - c2y) * (y - c2y);
                vals.push_back(std::exp(-d1 / (2 * w * w)) + 0.8 * std::exp(-d2 / (2 * w * w)));
            }
        }
        const ErrorField f = field_of(pts, 2, vals);
        const PeakSelection p = select_peaks(f, 2, 0.5);
        REQUIRE(p.points.size() == 2);
        CHECK(p.points[0][0] == doctest::Approx(c1x));
        CHECK(p.points[0][1] == doctest::Approx(c1y));
        CHECK(p.points[1][0] == doctest::Approx(c2x));
        CHECK(p.points[1][1] == doctest::Approx(c2y));
        const PeakSelection none = select_peaks(f, 2, 0.0);
        CHECK(std::sqrt(squared_distance(none.points[0], none.points[1])) < 0.1);
    }
    SUBCASE("picks are separated and avoid existing samples") {
        Rng rng(7);
        std::vector<double> pts, vals;
        for (int i = 0; i < 500; ++i) {
            pts.push_back(rng.uniform(-1.0, 1.0));
            pts.push_back(rng.uniform(-1.0, 1.0));
            vals.push_back(rng.uniform());
        }
        const ErrorField f = field_of(pts, 2, vals);
        const std::size_t top = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
        SampleSet existing;
        existing.pairs.push_back({State(f.point(top).begin(), f.point(top).end()), State{0.0, 0.0}});
        const PeakSelection p = select_peaks(f, 20, 0.1, &existing);
        CHECK(p.points.size() == 20);
        for (std::size_t a = 0; a < p.points.size(); ++a) {
            CHECK(p.indices[a] != top);
            for (std::size_t b = a + 1; b < p.points.size(); ++b) {
                CHECK(std::sqrt(squared_distance(p.points[a], p.points[b])) >= 0.1);
            }
        }
        const PeakSelection all = select_peaks(f, 1000, 0.5);
        CHECK(all.exhausted);
        CHECK(all.points.size() < 1000);
    }
}

TEST_CASE("stop modes round-trip through their names") {
    for (const auto m : {StopMode::oracle_error_threshold, StopMode::proxy_threshold, StopMode::sample_budget}) {
        CHECK(stop_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(stop_mode_from_string("never"), InvalidArgument);
}

TEST_CASE("loop with a budget equal to J0 runs no sampling iteration") {
    const SystemSpec sys = systems::pendulum();
    LoopConfig c = quick_loop(sys, 100);
    const LoopState s = critical_sampling_loop(sys, c);
    CHECK(s.finished);
    CHECK(s.history.size() == 1);
    CHECK(s.samples.oracle_count() == 100);
    CHECK(s.oracle_calls == 100);
    CHECK(s.has_models);
}

TEST_CASE("loop invariants, determinism and thread independence") {
    const SystemSpec sys = systems::pendulum();
    LoopConfig c = quick_loop(sys, 172);
    const LoopState a = critical_sampling_loop(sys, c);
    REQUIRE(a.history.size() == 3);
    for (std::size_t i = 1; i < a.history.size(); ++i) {
        CHECK(a.history[i].samples > a.history[i - 1].samples);
        CHECK(a.history[i].samples == a.history[i - 1].samples + 36);
    }
    CHECK(a.samples.oracle_count() == 172);
    CHECK(a.oracle_calls == 172);
    std::size_t critical = 0;
    for (const auto& p : a.samples.pairs) {
        CHECK(p.is_oracle());
        if (p.provenance == Provenance::oracle_critical) ++critical;
    }
    CHECK(critical == 72);

    const LoopState b = critical_sampling_loop(sys, c);
    CHECK(same_history(a.history, b.history));
    CHECK(a.samples == b.samples);
    CHECK(a.forward == b.forward);

    LoopConfig threaded = c;
    threaded.threads = 4;
    const LoopState t = critical_sampling_loop(sys, threaded);
    CHECK(same_history(a.history, t.history));
    CHECK(a.samples == t.samples);
}

TEST_CASE("proxy stop mode makes no evaluation calls") {
    const SystemSpec sys = systems::pendulum();
    LoopConfig c = quick_loop(sys, 172, 4);
    c.stop_mode = StopMode::proxy_threshold;
    c.threshold = 0.0;
    LoopCallbacks cb;
    cb.evaluator = protocol_evaluator(sys, default_protocol(sys));
    const LoopState s = critical_sampling_loop(sys, c, cb);
    CHECK(s.eval_calls == 0);
    for (const auto& r : s.history) {
        CHECK(r.eval_calls == 0);
        CHECK(std::isnan(r.eval_error));
    }
    CHECK(s.stop_reason == "sample budget reached");
}

TEST_CASE("pausing and resuming reproduces the uninterrupted loop") {
    const SystemSpec sys = systems::pendulum();
    LoopConfig c = quick_loop(sys, 208, 9);
    const LoopState full = critical_sampling_loop(sys, c);

    LoopCallbacks pause;
    pause.on_iteration = [](const LoopState& s) { return s.next_iteration < 2; };
    const LoopState half = critical_sampling_loop(sys, c, pause);
    CHECK_FALSE(half.finished);
    CHECK(half.history.size() == 2);
    const LoopState rest = critical_sampling_loop(sys, c, {}, &half);
    CHECK(same_history(full.history, rest.history));
    CHECK(full.samples == rest.samples);
    CHECK(full.forward == rest.forward);
    CHECK(full.backward == rest.backward);
}
