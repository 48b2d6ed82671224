#include "critsamp/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "critsamp/kernels.hpp"
#include "critsamp/parallel.hpp"
#include "critsamp/rng.hpp"

namespace critsamp {

double reciprocal_error(const StepMap& fwd, const StepMap& bwd, std::span<const double> u0,
                        std::size_t K) {
    return reciprocal_errors(fwd, bwd, u0, 1, K).front();
}

namespace {

void reciprocal_slice(const StepMap& fwd, const StepMap& bwd, std::span<const double> X,
                      std::size_t lo, std::size_t hi, std::size_t K, std::span<double> out) {
    const std::size_t n = fwd.dim();
    const std::size_t count = hi - lo;
    const auto t = reciprocal_trace_batch(fwd, bwd, X.subspan(lo * n, count * n), count, K);
    for (std::size_t i = 0; i < count; ++i) {
        double e = 0.0;
        bool finite = true;
        for (std::size_t k = 0; k <= K && finite; ++k) {
            const std::span<const double> a(t.fwd[k].data() + i * n, n);
            const std::span<const double> b(t.bwd[k].data() + i * n, n);
            finite = all_finite(a) && all_finite(b);
            e += squared_distance(a, b);
        }
        out[lo + i] = finite && std::isfinite(e) ? e : kInfinity;
    }
}

}  // namespace

std::vector<double> reciprocal_errors(const StepMap& fwd, const StepMap& bwd,
                                      std::span<const double> X, std::size_t count, std::size_t K,
                                      std::size_t threads) {
    if (fwd.dim() != bwd.dim() || X.size() != count * fwd.dim()) {
        throw InvalidArgument("start points do not match the maps' dimension");
    }
    std::vector<double> out(count);
    parallel_for(count, threads, [&](std::size_t lo, std::size_t hi) {
        reciprocal_slice(fwd, bwd, X, lo, hi, K, out);
    });
    return out;
}

double true_modeling_error(const StepMap& fwd, Oracle& oracle, std::span<const double> u0) {
    const State truth = oracle.evaluate(u0, oracle.system().delta);
    const State pred = fwd.apply_one(u0);
    return std::sqrt(squared_distance(pred, truth));
}

ErrorField error_field(const StepMap& fwd, const StepMap& bwd, std::span<const double> candidates,
                       std::size_t count, std::size_t K, Oracle* truth_oracle, std::size_t threads) {
    if (count == 0) throw InvalidArgument("error field needs at least one candidate");
    ErrorField f;
    f.dim = fwd.dim();
    f.points.assign(candidates.begin(), candidates.end());
    f.reciprocal = reciprocal_errors(fwd, bwd, candidates, count, K, threads);
    if (truth_oracle != nullptr) {
        f.truth.resize(count);
        std::vector<double> pred(count * f.dim);
        fwd.apply(candidates, count, pred);
        for (std::size_t i = 0; i < count; ++i) {
            const auto u = f.point(i);
            const State truth = truth_oracle->evaluate(u, truth_oracle->system().delta);
            f.truth[i] = std::sqrt(squared_distance({pred.data() + i * f.dim, f.dim}, truth));
        }
    }
    return f;
}

ErrorField error_field(const StepMap& fwd, const StepMap& bwd, const std::vector<State>& candidates,
                       std::size_t K, Oracle* truth_oracle, std::size_t threads) {
    std::vector<double> X;
    for (const auto& c : candidates) {
        if (c.size() != fwd.dim()) throw InvalidArgument("candidate has the wrong dimension");
        X.insert(X.end(), c.begin(), c.end());
    }
    return error_field(fwd, bwd, X, candidates.size(), K, truth_oracle, threads);
}

// -------------------------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    if (n != b.size()) throw InvalidArgument("correlation inputs differ in length");
    if (n < 3) throw UndefinedCorrelation("correlation needs at least 3 points");
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) throw UndefinedCorrelation("zero variance in correlation input");
    return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("correlation inputs differ in length");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return pearson(ra, rb);
}

ErrorField model_confined(const ErrorField& field, const StepMap& fwd, std::size_t K,
                          const Hypercube& domain) {
    const std::size_t n = field.dim;
    const std::size_t N = field.size();
    std::vector<char> keep(N, 1);
    std::vector<double> cur = field.points, next(N * n);
    for (std::size_t k = 0; k < K; ++k) {
        fwd.apply(cur, N, next);
        for (std::size_t i = 0; i < N; ++i) {
            if (keep[i] && !domain.contains(std::span<const double>(next).subspan(i * n, n))) keep[i] = 0;
        }
        std::swap(cur, next);
    }
    ErrorField out;
    out.dim = n;
    for (std::size_t i = 0; i < N; ++i) {
        if (!keep[i] && std::isfinite(field.reciprocal[i])) continue;
        const auto p = field.point(i);
        out.points.insert(out.points.end(), p.begin(), p.end());
        out.reciprocal.push_back(field.reciprocal[i]);
        if (field.has_truth()) out.truth.push_back(field.truth[i]);
    }
    return out;
}

Correlation correlation(const ErrorField& field) {
    if (!field.has_truth()) throw InvalidArgument("correlation needs true-error values");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (std::isfinite(field.reciprocal[i]) && std::isfinite(field.truth[i])) {
            a.push_back(field.reciprocal[i]);
            b.push_back(field.truth[i]);
        }
    }
    Correlation c;
    c.used = a.size();
    c.pearson = pearson(a, b);
    c.spearman = spearman(a, b);
    return c;
}

PeakSelection select_peaks(const ErrorField& field, std::size_t count, double radius,
                           const SampleSet* exclude, double exclude_tol) {
    if (count < 1) throw InvalidArgument("peak count must be >= 1");
    if (radius < 0.0) throw InvalidArgument("suppression radius must be >= 0");
    const std::size_t N = field.size();
    const std::size_t n = field.dim;
    std::vector<char> eligible(N, 1);
    std::vector<double> d2(N);
    const auto& k = kernels::active();
    if (exclude != nullptr) {
        const double tol2 = exclude_tol * exclude_tol;
        for (const auto& p : exclude->pairs) {
            if (!p.is_oracle()) continue;
            k.sqdist(field.points.data(), p.u0.data(), d2.data(), N, n);
            for (std::size_t i = 0; i < N; ++i) {
                if (d2[i] <= tol2) eligible[i] = 0;
            }
        }
    }
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return field.reciprocal[a] > field.reciprocal[b];
    });
    PeakSelection sel;
    const double r2 = radius * radius;
    for (const std::size_t i : order) {
        if (sel.indices.size() == count) break;
        if (!eligible[i]) continue;
        sel.indices.push_back(i);
        sel.points.emplace_back(field.point(i).begin(), field.point(i).end());
        eligible[i] = 0;
        k.sqdist(field.points.data(), field.points.data() + i * n, d2.data(), N, n);
        for (std::size_t j = 0; j < N; ++j) {
            if (d2[j] < r2) eligible[j] = 0;
        }
    }
    sel.exhausted = sel.indices.size() < count;
    return sel;
}

// -------------------------------------------------------------------------------------

std::string_view to_string(StopMode m) {
    switch (m) {
        case StopMode::oracle_error_threshold: return "oracle-error-threshold";
        case StopMode::proxy_threshold: return "proxy-threshold";
        case StopMode::sample_budget: return "sample-budget";
    }
    return "?";
}

StopMode stop_mode_from_string(std::string_view s) {
    if (s == "oracle-error-threshold") return StopMode::oracle_error_threshold;
    if (s == "proxy-threshold") return StopMode::proxy_threshold;
    if (s == "sample-budget") return StopMode::sample_budget;
    throw InvalidArgument("unknown stop mode '" + std::string(s) + "'");
}

std::string_view to_string(EvalMetric m) { return m == EvalMetric::trajectory ? "trajectory" : "grid"; }

EvalMetric eval_metric_from_string(std::string_view s) {
    if (s == "trajectory") return EvalMetric::trajectory;
    if (s == "grid") return EvalMetric::grid;
    throw InvalidArgument("unknown evaluation metric '" + std::string(s) + "'");
}

void LoopConfig::validate(const SystemSpec& sys) const {
    if (J0 < 1) throw InvalidArgument("J0 must be >= 1");
    if (batch_per_iter < 1) throw InvalidArgument("batch_per_iter must be >= 1");
    if (K < 1) throw InvalidArgument("K must be >= 1");
    if (suppression_fraction < 0.0) throw InvalidArgument("suppression fraction must be >= 0");
    if (budget != 0 && budget < J0) throw InvalidArgument("sample budget is below J0");
    if (evo_arch.input_dim != sys.dim || evo_arch.output_dim != sys.dim) {
        throw InvalidArgument("evolution architecture does not match the system dimension");
    }
    if (J0 < spatial.h_nn + 1 && augmentation) {
        throw InvalidArgument("J0 must exceed the spatial neighbourhood size");
    }
    train.validate();
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

std::size_t LoopConfig::augment_count(std::size_t oracle_count) const {
    return std::min(augment_factor * oracle_count, augment_cap);
}

LoopConfig default_loop_config(const SystemSpec& sys) {
    LoopConfig c;
    c.evo_arch.input_dim = sys.dim;
    c.evo_arch.output_dim = sys.dim;
    c.evo_arch.blocks = 1;
    c.evo_arch.width = 20;
    c.train.epochs = 150;
    c.spatial = SpatialHyper::defaults_for(sys.dim);
    if (sys.name.rfind("lorenz", 0) == 0) {
        c.evo_arch.width = 30;
        c.train.epochs = 60;
        c.J0 = 500;
        c.batch_per_iter = 200;
        c.budget = 5000;
    } else if (sys.name == "burgers") {
        c.evo_arch.blocks = 4;
        c.train.epochs = 60;
        c.J0 = 5000;
        c.batch_per_iter = 2000;
        c.budget = 20000;
    } else if (sys.name == "nonlinear") {
        c.budget = 1000;
    }
    return c;
}

bool HistoryRow::same_result(const HistoryRow& o) const {
    const auto same = [](double a, double b) {
        return (std::isnan(a) && std::isnan(b)) || a == b;
    };
    return iteration == o.iteration && samples == o.samples && same(mean_recip, o.mean_recip) &&
           same(max_recip, o.max_recip) && infinite == o.infinite && same(eval_error, o.eval_error) &&
           same(grid_truth, o.grid_truth) && oracle_calls == o.oracle_calls && eval_calls == o.eval_calls;
}

TrainedModels train_round(const SystemSpec& sys, const SampleSet& samples, const LoopConfig& config,
                          int iteration, const LoopState* warm) {
    const auto m = static_cast<std::uint64_t>(iteration);
    TrainedModels out;
    if (config.augmentation) {
        TrainConfig sc = config.train;
        sc.seed = derive_seed(config.seed, streams::init_spatial, m);
        sc.consistency_weight = 0.0;
        out.spatial = train_sdn(samples, config.spatial, sc, sys.domain);
        out.has_spatial = true;
        out.augmented = augment(samples, out.spatial, config.augment_count(samples.oracle_count()), sys.domain,
                                derive_seed(config.seed, streams::augment, m));
    } else {
        out.augmented = samples;
    }
    out.augmented.iteration = iteration;

    const bool warm_ok = config.warm_start && warm != nullptr && warm->has_models;
    TrainConfig fc = config.train;
    fc.seed = derive_seed(config.seed, streams::init_forward, m);
    fc.consistency_weight = out.has_spatial ? config.consistency_weight : 0.0;
    ConsistencyOptions opt;
    opt.spatial = &out.spatial;
    opt.spatial_samples = &samples;
    opt.domain = &sys.domain;
    opt.points = config.consistency_points;
    out.forward = train_evolution(out.augmented, Direction::forward, config.evo_arch, fc,
                                  out.has_spatial ? &opt : nullptr,
                                  warm_ok ? &warm->forward.params : nullptr);
    TrainConfig bc = config.train;
    bc.seed = derive_seed(config.seed, streams::init_backward, m);
    bc.consistency_weight = 0.0;
    out.backward = train_evolution(out.augmented, Direction::backward, config.evo_arch, bc, nullptr,
                                   warm_ok ? &warm->backward.params : nullptr);
    out.forward.trained_on_iteration = iteration;
    out.backward.trained_on_iteration = iteration;
    return out;
}

double grid_modeling_error(const StepMap& fwd, Oracle& oracle, std::size_t points,
                           std::uint64_t seed) {
    if (points == 0) throw InvalidArgument("grid needs at least one point");
    Rng rng(derive_seed(seed, streams::grid));
    double s = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
        const State u = oracle.system().domain.sample(rng);
        s += true_modeling_error(fwd, oracle, u);
    }
    return s / static_cast<double>(points);
}

LoopState critical_sampling_loop(const SystemSpec& sys, const LoopConfig& config,
                                 const LoopCallbacks& callbacks, const LoopState* resume) {
    config.validate(sys);
    using clock = std::chrono::steady_clock;
    const auto log = [&](const std::string& s) {
        if (callbacks.log) callbacks.log(s);
    };

    Oracle oracle(sys);
    Oracle eval_oracle(sys);
    LoopState state;
    if (resume != nullptr) {
        state = *resume;
        if (state.finished) return state;
        oracle.set_counters(state.oracle_calls, 0);
        eval_oracle.set_counters(0, state.eval_calls);
    } else {
        state.samples = generate_initial_set(oracle, config.J0, config.seed);
        state.oracle_calls = oracle.sample_calls();
    }

    const bool proxy = config.stop_mode == StopMode::proxy_threshold;
    const bool want_eval =
        config.stop_mode == StopMode::oracle_error_threshold ||
        (config.stop_mode == StopMode::sample_budget && config.track_eval);
    const double radius = config.suppression_fraction * sys.domain.diagonal();

    for (int m = state.next_iteration;; ++m) {
        const auto t0 = clock::now();
        state.samples.iteration = m;
        auto models = train_round(sys, state.samples, config, m, &state);
        const NetworkMap F(models.forward);
        const NetworkMap G(models.backward);

        std::vector<double> cand;
        std::size_t count = 0;
        if (config.augmentation) {
            for (const auto& p : models.augmented.pairs) cand.insert(cand.end(), p.u0.begin(), p.u0.end());
            count = models.augmented.size();
        } else {
            count = config.augment_count(state.samples.oracle_count());
            Rng rng(derive_seed(config.seed, streams::augment, static_cast<std::uint64_t>(m)));
            for (std::size_t i = 0; i < count; ++i) {
                const State q = sys.domain.sample(rng);
                cand.insert(cand.end(), q.begin(), q.end());
            }
        }
        const ErrorField field = error_field(F, G, cand, count, config.K, nullptr, config.threads);
        const ErrorField pool = config.confine_candidates ? model_confined(field, F, config.K, sys.domain) : ErrorField{};

        HistoryRow row;
        row.iteration = m;
        row.samples = state.samples.oracle_count();
        std::size_t finite = 0;
        for (const double e : field.reciprocal) {
            if (std::isfinite(e)) {
                row.mean_recip += e;
                row.max_recip = std::max(row.max_recip, e);
                ++finite;
            } else {
                ++row.infinite;
            }
        }
        row.mean_recip = finite ? row.mean_recip / static_cast<double>(finite) : kInfinity;
        if (want_eval && !proxy) {
            row.grid_truth = grid_modeling_error(F, eval_oracle, 1000, derive_seed(config.seed, streams::evaluation));
            row.eval_error = callbacks.evaluator ? callbacks.evaluator(models.forward, eval_oracle) : row.grid_truth;
        }
        row.oracle_calls = oracle.sample_calls();
        row.eval_calls = eval_oracle.eval_calls();
        row.seconds = std::chrono::duration<double>(clock::now() - t0).count();

        std::string reason;
        if (config.stop_mode == StopMode::oracle_error_threshold && row.eval_error <= config.threshold) {
            reason = "oracle error threshold reached";
        } else if (proxy && row.mean_recip <= config.threshold) {
            reason = "reciprocal error threshold reached";
        } else if (config.budget != 0 && row.samples >= config.budget) {
            reason = "sample budget reached";
        } else if (static_cast<std::size_t>(m) + 1 >= config.max_iterations) {
            reason = "iteration limit reached";
        }

        if (reason.empty()) {
            std::size_t want = config.batch_per_iter;
            if (config.budget != 0) want = std::min(want, config.budget - row.samples);
            const auto peaks =
                select_peaks(config.confine_candidates ? pool : field, want, radius, &state.samples);
            for (const auto& p : peaks.points) {
                state.samples.pairs.push_back(oracle_pair(oracle, p, Provenance::oracle_critical));
            }
            if (peaks.exhausted) log("candidate pool exhausted after " + std::to_string(peaks.points.size()) + " peaks");
            if (peaks.points.empty()) reason = "candidate pool exhausted";
        }
        row.oracle_calls = oracle.sample_calls();
        row.seconds = std::chrono::duration<double>(clock::now() - t0).count();

        state.history.push_back(row);
        state.oracle_calls = oracle.sample_calls();
        state.eval_calls = eval_oracle.eval_calls();
        state.forward = std::move(models.forward);
        state.backward = std::move(models.backward);
        state.spatial = std::move(models.spatial);
        state.has_models = true;
        state.next_iteration = m + 1;
        state.samples.iteration = m + 1;
        log("iteration " + std::to_string(m) + ": J=" + std::to_string(row.samples) +
            " mean_recip=" + std::to_string(row.mean_recip) + " eval=" + std::to_string(row.eval_error));
        if (!reason.empty()) {
            state.finished = true;
            state.stop_reason = reason;
            state.samples.iteration = m;
            if (callbacks.on_iteration) callbacks.on_iteration(state);
            return state;
        }
        if (callbacks.on_iteration && !callbacks.on_iteration(state)) return state;
    }
}

}  // namespace critsamp
