#include "critsamp/dynsys.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace critsamp {

Hypercube::Hypercube(std::vector<double> lo, std::vector<double> hi)
    : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.empty()) {
        throw InvalidArgument("hypercube bounds must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (!(lower[i] < upper[i])) throw InvalidArgument("hypercube requires lower < upper");
    }
}

bool Hypercube::contains(std::span<const double> u, double tol) const {
    if (u.size() != dim()) return false;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(u[i] >= lower[i] - tol && u[i] <= upper[i] + tol)) return false;
    }
    return true;
}

double Hypercube::diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) s += (upper[i] - lower[i]) * (upper[i] - lower[i]);
    return std::sqrt(s);
}

State Hypercube::center() const {
    State c(dim());
    for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
}

State Hypercube::sample(Rng& rng) const {
    State u(dim());
    for (std::size_t i = 0; i < dim(); ++i) u[i] = rng.uniform(lower[i], upper[i]);
    return u;
}

void SystemSpec::validate() const {
    if (dim < 1) throw InvalidArgument("system dimension must be >= 1");
    if (!(delta > 0.0)) throw InvalidArgument("system lag must be > 0");
    if (domain.dim() != dim) throw InvalidArgument("domain dimension does not match system");
    if (!rhs) throw InvalidArgument("system has no right-hand side");
    if (substeps < 1) throw InvalidArgument("substeps must be >= 1");
}

namespace {

constexpr double kPi = std::numbers::pi;

struct BurgersTables {
    // sin(j x_i) and j cos(j x_i), mode-major: [j * grid + i]
    std::array<double, kBurgersModes * kBurgersGrid> s{};
    std::array<double, kBurgersModes * kBurgersGrid> dc{};

    BurgersTables() {
        for (std::size_t j = 0; j < kBurgersModes; ++j) {
            const double k = static_cast<double>(j + 1);
            for (std::size_t i = 0; i < kBurgersGrid; ++i) {
                const double x = -kPi + 2.0 * kPi * static_cast<double>(i) / kBurgersGrid;
                s[j * kBurgersGrid + i] = std::sin(k * x);
                dc[j * kBurgersGrid + i] = k * std::cos(k * x);
            }
        }
    }
};

const BurgersTables& burgers_tables() {
    static const BurgersTables t;
    return t;
}

void burgers_rhs_into(std::span<const double> c, std::span<double> out) {
    const auto& t = burgers_tables();
    std::array<double, kBurgersGrid> flux{};  // u * u_x on the grid
    for (std::size_t i = 0; i < kBurgersGrid; ++i) {
        double u = 0.0, ux = 0.0;
        for (std::size_t j = 0; j < kBurgersModes; ++j) {
            u += c[j] * t.s[j * kBurgersGrid + i];
            ux += c[j] * t.dc[j * kBurgersGrid + i];
        }
        flux[i] = u * ux;
    }
    // (1/pi) * integral over the period by the uniform rule, exact for the
    // trigonometric degree (<= 27) of the integrand.
    const double w = 2.0 / kBurgersGrid;
    for (std::size_t j = 0; j < kBurgersModes; ++j) {
        double proj = 0.0;
        for (std::size_t i = 0; i < kBurgersGrid; ++i) proj += flux[i] * t.s[j * kBurgersGrid + i];
        const double k = static_cast<double>(j + 1);
        out[j] = -w * proj - kBurgersViscosity * k * k * c[j];
    }
}

void rk4_step(const Rhs& f, std::span<double> u, double h, State& k1, State& k2, State& k3,
              State& k4, State& tmp) {
    const std::size_t n = u.size();
    f(u, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
    f(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
    f(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + h * k3[i];
    f(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

State integrate_steps(const SystemSpec& sys, std::span<const double> u0, double t,
                      std::size_t steps) {
    State u(u0.begin(), u0.end());
    if (t == 0.0) return u;
    const double h = t / static_cast<double>(steps);
    State k1(sys.dim), k2(sys.dim), k3(sys.dim), k4(sys.dim), tmp(sys.dim);
    for (std::size_t s = 0; s < steps; ++s) {
        rk4_step(sys.rhs, u, h, k1, k2, k3, k4, tmp);
        if (!all_finite(u)) {
            throw DivergenceError("reference integration of '" + sys.name + "' diverged",
                                  h * static_cast<double>(s), s);
        }
    }
    return u;
}

std::size_t step_count(const SystemSpec& sys, double t) {
    const double hmax = sys.delta / static_cast<double>(sys.substeps);
    const double n = std::ceil(t / hmax - 1e-9);
    return static_cast<std::size_t>(std::max(1.0, n));
}

void check_state(const SystemSpec& sys, std::span<const double> u) {
    if (u.size() != sys.dim) {
        throw InvalidArgument("state has length " + std::to_string(u.size()) + ", system '" +
                              sys.name + "' expects " + std::to_string(sys.dim));
    }
}

}  // namespace

namespace systems {

SystemSpec pendulum() {
    SystemSpec s;
    s.name = "pendulum";
    s.dim = 2;
    s.delta = 0.1;
    s.domain = Hypercube({-kPi, -2.0 * kPi}, {kPi, 2.0 * kPi});
    s.rhs = [](std::span<const double> u, std::span<double> du) {
        du[0] = u[1];
        du[1] = -0.2 * u[1] - 8.91 * std::sin(u[0]);
    };
    return s;
}

SystemSpec nonlinear2d() {
    SystemSpec s;
    s.name = "nonlinear";
    s.dim = 2;
    s.delta = 0.1;
    s.domain = Hypercube({-2.0, -2.0}, {2.0, 2.0});
    s.rhs = [](std::span<const double> u, std::span<double> du) {
        const double r2m1 = u[0] * u[0] + u[1] * u[1] - 1.0;
        du[0] = u[1] - u[0] * r2m1;
        du[1] = -u[0] - u[1] * r2m1;
    };
    return s;
}

namespace {
void lorenz_rhs(std::span<const double> u, std::span<double> du) {
    du[0] = 10.0 * (u[1] - u[0]);
    du[1] = u[0] * (28.0 - u[2]) - u[1];
    du[2] = u[0] * u[1] - (8.0 / 3.0) * u[2];
}
}  // namespace

SystemSpec lorenz() {
    SystemSpec s;
    s.name = "lorenz";
    s.dim = 3;
    s.delta = 0.01;
    s.domain = Hypercube({-25.0, -25.0, 0.0}, {25.0, 25.0, 50.0});
    s.rhs = lorenz_rhs;
    return s;
}

SystemSpec lorenz_coarse() {
    SystemSpec s = lorenz();
    s.name = "lorenz-coarse";
    s.delta = 0.05;
    return s;
}

SystemSpec burgers() {
    SystemSpec s;
    s.name = "burgers";
    s.dim = kBurgersModes;
    s.delta = 0.05;
    s.domain = Hypercube({-1.5, -0.5, -0.2, -0.2, -0.1, -0.1, -0.05, -0.05, -0.02},
                         {1.5, 0.5, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05, 0.02});
    s.rhs = burgers_rhs_into;
    return s;
}

SystemSpec linear(std::vector<double> A, std::size_t n, double delta, Hypercube domain,
                  std::string name) {
    if (A.size() != n * n) throw InvalidArgument("linear system matrix must be n x n");
    SystemSpec s;
    s.name = std::move(name);
    s.dim = n;
    s.delta = delta;
    s.domain = std::move(domain);
    s.rhs = [A = std::move(A), n](std::span<const double> u, std::span<double> du) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += A[i * n + j] * u[j];
            du[i] = acc;
        }
    };
    s.validate();
    return s;
}

SystemSpec by_name(std::string_view name) {
    if (name == "pendulum") return pendulum();
    if (name == "nonlinear") return nonlinear2d();
    if (name == "lorenz") return lorenz();
    if (name == "lorenz-coarse") return lorenz_coarse();
    if (name == "burgers") return burgers();
    throw InvalidArgument("unknown system '" + std::string(name) + "'");
}

std::vector<std::string> builtin_names() {
    return {"pendulum", "nonlinear", "lorenz", "lorenz-coarse", "burgers"};
}

}  // namespace systems

SystemSpec reversed(const SystemSpec& sys) {
    SystemSpec r = sys;
    r.name = sys.name + "-reversed";
    r.rhs = [f = sys.rhs](std::span<const double> u, std::span<double> du) {
        f(u, du);
        for (double& d : du) d = -d;
    };
    return r;
}

State rhs_eval(const SystemSpec& sys, std::span<const double> u) {
    check_state(sys, u);
    State du(sys.dim);
    sys.rhs(u, du);
    return du;
}

State integrate(const SystemSpec& sys, std::span<const double> u0, double t) {
    check_state(sys, u0);
    if (!(t >= 0.0)) throw InvalidArgument("integration time must be >= 0");
    if (!all_finite(u0)) throw InvalidArgument("initial state must be finite");
    if (t == 0.0) return State(u0.begin(), u0.end());
    return integrate_steps(sys, u0, t, step_count(sys, t));
}

VerifiedFlow integrate_verified(const SystemSpec& sys, std::span<const double> u0, double t) {
    check_state(sys, u0);
    if (!(t >= 0.0)) throw InvalidArgument("integration time must be >= 0");
    if (t == 0.0) return {State(u0.begin(), u0.end()), 0.0};
    const std::size_t n = step_count(sys, t);
    const State coarse = integrate_steps(sys, u0, t, n);
    State fine = integrate_steps(sys, u0, t, 2 * n);
    const double err = std::sqrt(squared_distance(fine, coarse)) / 15.0;
    return {std::move(fine), err};
}

bool stays_in_domain(const SystemSpec& sys, std::span<const double> u, double t,
                     std::size_t checkpoints) {
    if (!sys.domain.contains(u)) return false;
    State cur(u.begin(), u.end());
    const double dt = t / static_cast<double>(checkpoints);
    for (std::size_t c = 0; c < checkpoints; ++c) {
        try {
            cur = integrate(sys, cur, dt);
        } catch (const DivergenceError&) {
            return false;
        }
        if (!sys.domain.contains(cur)) return false;
    }
    return true;
}

State burgers_modal_rhs(std::span<const double> coeffs) {
    if (coeffs.size() != kBurgersModes) throw InvalidArgument("Burgers modal state has 9 entries");
    State out(kBurgersModes);
    burgers_rhs_into(coeffs, out);
    return out;
}

std::vector<double> burgers_reconstruct(std::span<const double> coeffs,
                                        std::span<const double> x) {
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double u = 0.0;
        for (std::size_t j = 0; j < coeffs.size(); ++j) u += coeffs[j] * std::sin((j + 1.0) * x[i]);
        out[i] = u;
    }
    return out;
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::oracle_initial: return "oracle-initial";
        case Provenance::oracle_critical: return "oracle-critical";
        case Provenance::augmented: return "augmented";
    }
    return "?";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "oracle-initial") return Provenance::oracle_initial;
    if (s == "oracle-critical") return Provenance::oracle_critical;
    if (s == "augmented") return Provenance::augmented;
    throw InvalidArgument("unknown provenance '" + std::string(s) + "'");
}

std::size_t SampleSet::oracle_count() const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const SamplePair& p) { return p.is_oracle(); }));
}

SampleSet SampleSet::oracle_only() const {
    SampleSet out;
    out.iteration = iteration;
    for (const auto& p : pairs) {
        if (p.is_oracle()) out.pairs.push_back(p);
    }
    return out;
}

bool SampleSet::contains_oracle_u0(std::span<const double> u, double tol) const {
    const double tol2 = tol * tol;
    for (const auto& p : pairs) {
        if (p.is_oracle() && squared_distance(p.u0, u) <= tol2) return true;
    }
    return false;
}

SamplePair Oracle::query(std::span<const double> u0, Provenance provenance) {
    if (provenance == Provenance::augmented) {
        throw InvalidArgument("oracle samples cannot carry augmented provenance");
    }
    if (!sys_.domain.contains(u0, 1e-12)) {
        throw InvalidArgument("oracle query outside the sampling domain");
    }
    ++sample_calls_;
    return {State(u0.begin(), u0.end()), integrate(sys_, u0, sys_.delta), provenance};
}

State Oracle::evaluate(std::span<const double> u0, double t) {
    ++eval_calls_;
    return integrate(sys_, u0, t);
}

SamplePair oracle_pair(Oracle& oracle, std::span<const double> u0, Provenance provenance) {
    return oracle.query(u0, provenance);
}

SampleSet generate_initial_set(Oracle& oracle, std::size_t J0, std::uint64_t seed) {
    if (J0 < 1) throw InvalidArgument("initial sample count must be >= 1");
    SampleSet set;
    set.pairs.reserve(J0);
    const auto& domain = oracle.system().domain;
    for (std::size_t j = 0; j < J0; ++j) {
        Rng rng(derive_seed(seed, streams::initial_set, j));
        const State u0 = domain.sample(rng);
        set.pairs.push_back(oracle.query(u0, Provenance::oracle_initial));
    }
    return set;
}

}  // namespace critsamp
