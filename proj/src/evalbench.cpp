#include "critsamp/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "critsamp/rng.hpp"

namespace critsamp {

namespace {

std::size_t step_count(double horizon, double delta) {
    const double r = horizon / delta;
    const auto k = static_cast<std::size_t>(std::llround(r));
    if (k == 0 || std::abs(r - static_cast<double>(k)) > 1e-9 * r) {
        throw InvalidArgument("evaluation horizon must be a positive integer number of lags");
    }
    return k;
}

bool confined(const SystemSpec& sys, std::span<const double> u0, std::size_t steps) {
    State u(u0.begin(), u0.end());
    for (std::size_t k = 0; k < steps; ++k) {
        u = integrate(sys, u, sys.delta);
        if (!sys.domain.contains(u)) return false;
    }
    return true;
}

void finish(MeanStd& r, std::span<const double> per_step_mean) {
    const std::size_t N = r.per_trajectory.size();
    double s = 0.0;
    std::size_t finite = 0;
    for (const double e : r.per_trajectory) {
        if (std::isfinite(e)) {
            s += e;
            ++finite;
        }
    }
    r.diverged = N - finite;
    if (r.diverged > 0) {
        r.mean = kInfinity;
        r.std = kInfinity;
        r.step_first_std = kInfinity;
        return;
    }
    r.mean = s / static_cast<double>(N);
    double v = 0.0;
    for (const double e : r.per_trajectory) v += (e - r.mean) * (e - r.mean);
    r.std = std::sqrt(v / static_cast<double>(N));
    if (!per_step_mean.empty()) {
        const double m = std::accumulate(per_step_mean.begin(), per_step_mean.end(), 0.0) /
                         static_cast<double>(per_step_mean.size());
        double w = 0.0;
        for (const double e : per_step_mean) w += (e - m) * (e - m);
        r.step_first_std = std::sqrt(w / static_cast<double>(per_step_mean.size()));
    }
}

}  // namespace

EvalProtocol default_protocol(const SystemSpec& sys, std::uint64_t seed) {
    EvalProtocol p;
    p.seed = seed;
    if (sys.name == "pendulum") {
        p.horizon = 20.0;
    } else if (sys.name == "nonlinear") {
        p.horizon = 10.0;
    } else if (sys.name.rfind("lorenz", 0) == 0) {
        p.horizon = 5.0;
    } else if (sys.name == "burgers") {
        p.horizon = 2.0;
        p.metric = EvalMetricKind::modal_l2;
        p.confined = false;
    } else {
        p.horizon = 20.0 * sys.delta;
    }
    return p;
}

std::vector<State> test_starts(const SystemSpec& sys, const EvalProtocol& protocol,
                               const SampleSet* exclude) {
    const std::size_t steps = step_count(protocol.horizon, sys.delta);
    Rng rng(derive_seed(protocol.seed, streams::evaluation));
    std::vector<State> out;
    const std::size_t max_draws = 1000 * protocol.n_trajectories + 1000;
    for (std::size_t draw = 0; out.size() < protocol.n_trajectories; ++draw) {
        if (draw >= max_draws) throw InvalidArgument("could not find enough admissible test start states");
        State u = sys.domain.sample(rng);
        if (exclude != nullptr && exclude->contains_oracle_u0(u, 1e-9)) continue;
        if (protocol.confined && !confined(sys, u, steps)) continue;
        out.push_back(std::move(u));
    }
    return out;
}

std::vector<State> reference_trajectory(Oracle& oracle, std::span<const double> u0, std::size_t steps) {
    std::vector<State> path;
    path.reserve(steps + 1);
    path.emplace_back(u0.begin(), u0.end());
    for (std::size_t k = 0; k < steps; ++k) path.push_back(oracle.evaluate(path.back(), oracle.system().delta));
    return path;
}

MeanStd trajectory_mse(const StepMap& model, Oracle& oracle, const std::vector<State>& starts,
                       std::size_t steps) {
    if (starts.empty() || steps == 0) throw InvalidArgument("trajectory evaluation needs starts and steps");
    const std::size_t n = model.dim();
    MeanStd r;
    std::vector<double> per_step(steps, 0.0);
    for (const auto& u0 : starts) {
        const auto ref = reference_trajectory(oracle, u0, steps);
        State u = u0;
        double s = 0.0;
        bool ok = true;
        for (std::size_t k = 1; k <= steps; ++k) {
            u = model.apply_one(u);
            if (!all_finite(u)) {
                ok = false;
                break;
            }
            const double e = squared_distance(u, ref[k]) / static_cast<double>(n);
            s += e;
            per_step[k - 1] += e / static_cast<double>(starts.size());
        }
        r.per_trajectory.push_back(ok && std::isfinite(s) ? s / static_cast<double>(steps) : kInfinity);
    }
    finish(r, per_step);
    return r;
}

MeanStd trajectory_mse(const StepMap& model, const SystemSpec& sys, const EvalProtocol& protocol,
                       const SampleSet* exclude) {
    Oracle oracle(sys);
    return trajectory_mse(model, oracle, test_starts(sys, protocol, exclude),
                          step_count(protocol.horizon, sys.delta));
}

MeanStd pde_l2_error(const StepMap& model, const SystemSpec& sys, const EvalProtocol& protocol,
                     const SampleSet* exclude) {
    if (sys.dim != kBurgersModes) throw InvalidArgument("the field error protocol needs the Burgers modal system");
    const std::size_t steps = step_count(protocol.horizon, sys.delta);
    std::vector<double> x(protocol.pde_points);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = -std::numbers::pi + 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                       static_cast<double>(x.size());
    }
    Oracle oracle(sys);
    MeanStd r;
    for (const auto& u0 : test_starts(sys, protocol, exclude)) {
        State c = u0;
        bool ok = true;
        for (std::size_t k = 0; k < steps && ok; ++k) {
            c = model.apply_one(c);
            ok = all_finite(c);
        }
        if (!ok) {
            r.per_trajectory.push_back(kInfinity);
            continue;
        }
        const State truth = oracle.evaluate(u0, protocol.horizon);
        const auto a = burgers_reconstruct(c, x);
        const auto b = burgers_reconstruct(truth, x);
        r.per_trajectory.push_back(std::sqrt(squared_distance(a, b) / static_cast<double>(x.size())));
    }
    finish(r, {});
    return r;
}

RelativeL2 relative_l2(const StepMap& model, const SystemSpec& sys, const std::vector<State>& states,
                       std::size_t per_second_steps) {
    if (states.empty()) throw InvalidArgument("relative error needs test states");
    RelativeL2 r;
    double s1 = 0.0, s20 = 0.0;
    for (const auto& u : states) {
        const State one = integrate(sys, u, sys.delta);
        const State many = integrate(sys, u, sys.delta * static_cast<double>(per_second_steps));
        const State p1 = model.apply_one(u);
        State p = u;
        for (std::size_t k = 0; k < per_second_steps; ++k) p = model.apply_one(p);
        if (!all_finite(p1) || !all_finite(p)) {
            ++r.diverged;
            continue;
        }
        s1 += std::sqrt(squared_distance(p1, one) / squared_distance(one, State(one.size(), 0.0)));
        s20 += std::sqrt(squared_distance(p, many) / squared_distance(many, State(many.size(), 0.0)));
        ++r.states;
    }
    if (r.states == 0) {
        r.per_step = r.per_second = kInfinity;
    } else {
        r.per_step = s1 / static_cast<double>(r.states);
        r.per_second = s20 / static_cast<double>(r.states);
    }
    if (r.diverged > 0) r.per_second = kInfinity;
    return r;
}

std::vector<State> trajectory_states(const SystemSpec& sys, std::span<const double> u0, double burn_in,
                                     std::size_t count, std::size_t stride) {
    if (stride == 0) throw InvalidArgument("stride must be >= 1");
    State u = integrate(sys, u0, burn_in);
    std::vector<State> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(u);
        u = integrate(sys, u, sys.delta * static_cast<double>(stride));
    }
    return out;
}

std::function<double(const EvolutionModel&, Oracle&)> protocol_evaluator(const SystemSpec& sys,
                                                                        const EvalProtocol& protocol) {
    if (protocol.metric == EvalMetricKind::modal_l2) {
        return [sys, protocol](const EvolutionModel& m, Oracle&) {
            return pde_l2_error(NetworkMap(m), sys, protocol).mean;
        };
    }
    const auto starts = test_starts(sys, protocol);
    const std::size_t steps = step_count(protocol.horizon, sys.delta);
    return [starts, steps](const EvolutionModel& m, Oracle& oracle) {
        return trajectory_mse(NetworkMap(m), oracle, starts, steps).mean;
    };
}

MeanStd evaluate_model(const EvolutionModel& model, const SystemSpec& sys, const EvalProtocol& protocol,
                       const SampleSet* exclude) {
    const NetworkMap map(model);
    if (protocol.metric == EvalMetricKind::modal_l2) return pde_l2_error(map, sys, protocol, exclude);
    return trajectory_mse(map, sys, protocol, exclude);
}

EvolutionModel train_baseline(const SystemSpec& sys, std::size_t J, const LoopConfig& config,
                              std::uint64_t seed) {
    Oracle oracle(sys);
    const SampleSet samples = generate_initial_set(oracle, J, seed);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, streams::init_forward, 0);
    tc.consistency_weight = 0.0;
    return train_evolution(samples, Direction::forward, config.evo_arch, tc);
}

}  // namespace critsamp
