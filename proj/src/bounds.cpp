#include "critsamp/bounds.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "critsamp/rng.hpp"
#include "critsamp/sampler.hpp"

namespace critsamp {

void BoundParams::validate() const {
    if (!(c_h >= 0.0) || !(eps_f >= 0.0) || !(eps_g >= 0.0)) {
        throw InvalidArgument("bound parameters must be nonnegative");
    }
    if (!(delta > 0.0)) throw InvalidArgument("bound time lag must be positive");
    if (!composed.empty() && composed.size() != K + 1) {
        throw InvalidArgument("composed deviation needs K + 1 entries");
    }
}

double growth_sum(double c_h, double delta, std::size_t j) {
    const double x = c_h * delta;
    if (x == 0.0) return static_cast<double>(j);
    // expm1 keeps the ratio accurate for small c delta.
    return std::expm1(x * static_cast<double>(j)) / std::expm1(x);
}

double forward_bound(const BoundParams& bp, double e0, std::size_t k) {
    if (k == 0) return e0;
    return e0 * std::exp(bp.c_h * static_cast<double>(k) * bp.delta) + growth_sum(bp.c_h, bp.delta, k) * bp.eps_f;
}

double backward_bound(const BoundParams& bp, double eK, std::size_t k) {
    if (k > bp.K) throw InvalidArgument("backward bound index exceeds K");
    const std::size_t j = bp.K - k;
    if (j == 0) return eK;
    return eK * std::exp(bp.c_h * static_cast<double>(j) * bp.delta) + growth_sum(bp.c_h, bp.delta, j) * bp.eps_g;
}

double reciprocal_bound(const BoundParams& bp, std::size_t k) {
    if (k > bp.K) throw InvalidArgument("reciprocal bound index exceeds K");
    const std::size_t j = bp.K - k;
    const double second = growth_sum(bp.c_h, bp.delta, bp.K) * bp.eps_f *
                              std::exp(bp.c_h * static_cast<double>(j) * bp.delta) +
                          growth_sum(bp.c_h, bp.delta, j) * bp.eps_g;
    if (bp.composed.empty()) return second;
    const double first = bp.composed[j] + growth_sum(bp.c_h, bp.delta, k) * bp.eps_f;
    return std::min(first, second);
}

double estimate_lipschitz(const SystemSpec& sys, const Hypercube& domain, std::size_t n_samples,
                          std::uint64_t seed) {
    if (n_samples == 0) throw InvalidArgument("Lipschitz estimate needs sample points");
    const std::size_t n = sys.dim;
    constexpr double h = 1e-6;
    Rng rng(derive_seed(seed, streams::lipschitz));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    double best = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const State u = domain.sample(rng);
        for (std::size_t c = 0; c < n; ++c) {
            State up = u, dn = u;
            up[c] += h;
            dn[c] -= h;
            const State fp = rhs_eval(sys, up);
            const State fm = rhs_eval(sys, dn);
            for (std::size_t r = 0; r < n; ++r) {
                J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
        best = std::max(best, svd.singularValues()(0));
    }
    return 1.05 * best;
}

namespace {

double radical_inverse(std::size_t i, unsigned base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

}  // namespace

std::vector<State> halton_grid(const Hypercube& domain, std::size_t count) {
    const std::size_t n = domain.dim();
    if (n > std::size(kPrimes)) throw InvalidArgument("Halton grid supports at most 12 dimensions");
    std::vector<State> out(count, State(n));
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t d = 0; d < n; ++d) {
            out[i][d] = domain.lower[d] + (domain.upper[d] - domain.lower[d]) * radical_inverse(i + 1, kPrimes[d]);
        }
    }
    return out;
}

std::vector<State> bound_grid(const Hypercube& domain, std::size_t count, std::uint64_t seed) {
    if (domain.dim() <= 3) return halton_grid(domain, count);
    Rng rng(derive_seed(seed, streams::grid, 1));
    std::vector<State> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(domain.sample(rng));
    return out;
}

EpsEstimate estimate_eps(const StepMap& model, const SystemSpec& sys, Direction direction,
                         const std::vector<State>& grid) {
    const SystemSpec flow = direction == Direction::forward ? sys : reversed(sys);
    EpsEstimate r;
    for (const auto& u : grid) {
        if (!stays_in_domain(flow, u, sys.delta)) {
            ++r.rejected;
            continue;
        }
        r.grid.push_back(u);
    }
    if (r.grid.empty()) throw InvalidArgument("no grid point satisfies the one-lag domain condition");
    const std::size_t n = sys.dim;
    std::vector<double> X;
    X.reserve(r.grid.size() * n);
    for (const auto& u : r.grid) X.insert(X.end(), u.begin(), u.end());
    std::vector<double> Y(X.size());
    model.apply(X, r.grid.size(), Y);
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        const State ref = integrate(flow, r.grid[i], sys.delta);
        double d2 = 0.0;
        for (std::size_t c = 0; c < n; ++c) d2 += (Y[i * n + c] - ref[c]) * (Y[i * n + c] - ref[c]);
        const double d = std::sqrt(d2);
        if (!std::isfinite(d)) {
            r.value = kInfinity;
            break;
        }
        r.value = std::max(r.value, d);
    }
    return r;
}

std::vector<double> composed_deviation(const StepMap& fwd, const StepMap& bwd,
                                       const std::vector<State>& points, std::size_t K) {
    const std::size_t n = fwd.dim();
    const std::size_t N = points.size();
    std::vector<double> out(K + 1, 0.0);
    if (N == 0) return out;
    std::vector<double> X;
    X.reserve(N * n);
    for (const auto& p : points) X.insert(X.end(), p.begin(), p.end());
    std::vector<double> cur = X, tmp(X.size());
    for (std::size_t j = 1; j <= K; ++j) {
        // cur holds F^j; the backward rollout restarts from it each time.
        fwd.apply(cur, N, tmp);
        std::swap(cur, tmp);
        std::vector<double> back = cur, next(X.size());
        for (std::size_t i = 0; i < j; ++i) {
            bwd.apply(back, N, next);
            std::swap(back, next);
        }
        double worst = 0.0;
        for (std::size_t p = 0; p < N; ++p) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < n; ++c) d2 += (back[p * n + c] - X[p * n + c]) * (back[p * n + c] - X[p * n + c]);
            const double d = std::sqrt(d2);
            worst = std::isfinite(d) ? std::max(worst, d) : kInfinity;
        }
        out[j] = worst;
    }
    return out;
}

bool BoundReport::all_satisfied() const {
    const auto ok = [](const std::vector<BoundRow>& rows) {
        return std::all_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.satisfied; });
    };
    return eligible > 0 && ok(forward) && ok(backward) && ok(reciprocal);
}

namespace {

constexpr double kOracleSlack = 1e-8;

struct TestPath {
    std::vector<State> truth, fwd, bwd, handoff;
};

std::vector<State> model_path(const StepMap& map, const State& start, std::size_t K) {
    std::vector<State> p{start};
    for (std::size_t k = 0; k < K; ++k) p.push_back(map.apply_one(p.back()));
    return p;
}

bool all_stay(const SystemSpec& flow, const std::vector<State>& pts, std::size_t lo, std::size_t hi,
              double delta) {
    for (std::size_t k = lo; k < hi; ++k) {
        if (!all_finite(pts[k]) || !stays_in_domain(flow, pts[k], delta)) return false;
    }
    return true;
}

}  // namespace

BoundReport bound_study(const StepMap& fwd, const StepMap& bwd, const SystemSpec& sys,
                        const BoundStudyOptions& options) {
    const std::size_t K = options.K;
    const SystemSpec back_flow = reversed(sys);
    BoundReport report;
    report.test_points = options.test_points;

    Rng rng(derive_seed(options.seed, streams::evaluation, 1));
    std::vector<TestPath> paths;
    for (std::size_t t = 0; t < options.test_points; ++t) {
        TestPath p;
        p.truth.push_back(sys.domain.sample(rng));
        for (std::size_t k = 0; k < K; ++k) p.truth.push_back(integrate(sys, p.truth.back(), sys.delta));
        p.fwd = model_path(fwd, p.truth.front(), K);
        // Backward paths are indexed by time: entry k approximates u(t_k).
        p.bwd = model_path(bwd, p.truth.back(), K);
        std::reverse(p.bwd.begin(), p.bwd.end());
        p.handoff = model_path(bwd, p.fwd.back(), K);
        std::reverse(p.handoff.begin(), p.handoff.end());
        const bool ok = all_stay(sys, p.truth, 0, K, sys.delta) && all_stay(sys, p.fwd, 0, K, sys.delta) &&
                        all_stay(back_flow, p.truth, 1, K + 1, sys.delta) &&
                        all_stay(back_flow, p.bwd, 1, K + 1, sys.delta) &&
                        all_stay(back_flow, p.handoff, 1, K + 1, sys.delta);
        if (ok) paths.push_back(std::move(p));
    }
    report.eligible = paths.size();

    // The sup-norm estimates cover the grid and every point the test rollouts visit.
    std::vector<State> grid = bound_grid(sys.domain, options.grid_points, options.seed);
    std::vector<State> fgrid = grid, bgrid = grid, cgrid = grid;
    for (const auto& p : paths) {
        for (std::size_t k = 0; k < K; ++k) fgrid.push_back(p.fwd[k]);
        for (std::size_t k = 1; k <= K; ++k) {
            bgrid.push_back(p.bwd[k]);
            bgrid.push_back(p.handoff[k]);
        }
        for (std::size_t k = 0; k <= K; ++k) cgrid.push_back(p.fwd[k]);
    }
    report.grid_points = grid.size();

    BoundParams& bp = report.params;
    bp.K = K;
    bp.delta = sys.delta;
    bp.c_h = estimate_lipschitz(sys, sys.domain, options.lipschitz_samples, options.seed);
    bp.eps_f = estimate_eps(fwd, sys, Direction::forward, fgrid).value;
    bp.eps_g = estimate_eps(bwd, sys, Direction::backward, bgrid).value;
    bp.composed = composed_deviation(fwd, bwd, cgrid, K);

    // Slack covers the reference solver's own error in the true paths; the estimates
    // are otherwise exact inequalities.
    const auto within = [](double e, double b) { return e <= b * (1.0 + 1e-12) + kOracleSlack; };
    std::size_t fok = 0, bok = 0, rok = 0, total = 0;
    for (std::size_t k = 0; k <= K; ++k) {
        BoundRow f{k, 0.0, forward_bound(bp, 0.0, k), true};
        BoundRow b{k, 0.0, backward_bound(bp, 0.0, k), true};
        BoundRow r{k, 0.0, reciprocal_bound(bp, k), true};
        for (const auto& p : paths) {
            const double ef = std::sqrt(squared_distance(p.fwd[k], p.truth[k]));
            const double eb = std::sqrt(squared_distance(p.bwd[k], p.truth[k]));
            const double er = std::sqrt(squared_distance(p.handoff[k], p.truth[k]));
            f.empirical = std::max(f.empirical, ef);
            b.empirical = std::max(b.empirical, eb);
            r.empirical = std::max(r.empirical, er);
            fok += within(ef, f.bound);
            bok += within(eb, b.bound);
            rok += within(er, r.bound);
            ++total;
        }
        f.satisfied = within(f.empirical, f.bound);
        b.satisfied = within(b.empirical, b.bound);
        r.satisfied = within(r.empirical, r.bound);
        report.forward.push_back(f);
        report.backward.push_back(b);
        report.reciprocal.push_back(r);
    }
    if (total > 0) {
        report.forward_rate = static_cast<double>(fok) / static_cast<double>(total);
        report.backward_rate = static_cast<double>(bok) / static_cast<double>(total);
        report.reciprocal_rate = static_cast<double>(rok) / static_cast<double>(total);
    }
    return report;
}

}  // namespace critsamp
