#include "critsamp/evonet.hpp"

#include <algorithm>
#include <cmath>

#include "critsamp/rng.hpp"

namespace critsamp {

std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

Direction direction_from_string(std::string_view s) {
    if (s == "forward") return Direction::forward;
    if (s == "backward") return Direction::backward;
    throw InvalidArgument("unknown direction '" + std::string(s) + "'");
}

State StepMap::apply_one(std::span<const double> x) const {
    State y(dim());
    apply(x, 1, y);
    return y;
}

NetworkMap::NetworkMap(const EvolutionModel& model)
    : net_(model.arch), params_(model.params.values) {
    if (model.arch.input_dim != model.arch.output_dim) {
        throw InvalidArgument("evolution networks map the state space to itself");
    }
    if (params_.size() != net_.layout().size()) throw InvalidArgument("parameter count does not match architecture");
}

void NetworkMap::apply(std::span<const double> X, std::size_t count, std::span<double> Y) const {
    const std::size_t n = dim();
    constexpr std::size_t chunk = 512;
    Workspace ws;
    for (std::size_t lo = 0; lo < count; lo += chunk) {
        const std::size_t B = std::min(chunk, count - lo);
        net_.forward(params_, X.subspan(lo * n, B * n), B, ws);
        const auto out = ws.output();
        std::copy(out.begin(), out.end(), Y.begin() + static_cast<std::ptrdiff_t>(lo * n));
    }
}

void FunctionMap::apply(std::span<const double> X, std::size_t count, std::span<double> Y) const {
    for (std::size_t i = 0; i < count; ++i) {
        const State y = fn_(X.subspan(i * dim_, dim_));
        if (y.size() != dim_) throw InvalidArgument("map returned a state of the wrong dimension");
        std::copy(y.begin(), y.end(), Y.begin() + static_cast<std::ptrdiff_t>(i * dim_));
    }
}

FunctionMap reference_map(const SystemSpec& sys) {
    return FunctionMap(sys.dim, [sys](std::span<const double> u) { return integrate(sys, u, sys.delta); });
}

SampleSet reverse_pairs(const SampleSet& samples) {
    SampleSet out;
    out.iteration = samples.iteration;
    out.pairs.reserve(samples.size());
    for (const auto& p : samples.pairs) out.pairs.push_back(SamplePair{p.u1, p.u0, p.provenance});
    return out;
}

namespace {

/// (nb / L) * sum over this batch's chunk of ||F(q) - Gamma(q)||^2, so that summed
/// over an epoch it is nb times the mean over the L points.
class ConsistencyLoss final : public AuxLoss {
public:
    ConsistencyLoss(const ConsistencyOptions& opt, std::uint64_t seed)
        : predictor_(*opt.spatial, *opt.spatial_samples), domain_(*opt.domain), L_(opt.points),
          seed_(seed), n_(opt.spatial->dim) {}

    void begin_epoch(std::size_t epoch, std::size_t num_batches) override {
        num_batches_ = num_batches;
        Rng rng(derive_seed(seed_, streams::consistency, epoch));
        Q_.resize(L_ * n_);
        for (std::size_t l = 0; l < L_; ++l) {
            const State q = domain_.sample(rng);
            std::copy(q.begin(), q.end(), Q_.begin() + static_cast<std::ptrdiff_t>(l * n_));
        }
        T_ = predictor_.predict_batch(Q_, L_);
    }

    double accumulate(const BatchContext& ctx, double weight) override {
        const std::size_t lo = ctx.batch_index * L_ / num_batches_;
        const std::size_t hi = (ctx.batch_index + 1) * L_ / num_batches_;
        if (hi <= lo) return 0.0;
        const std::size_t B = hi - lo;
        // mse_accumulate divides by B; rescale to (nb / L) per point.
        const double per_point = static_cast<double>(num_batches_) / static_cast<double>(L_);
        const double factor = per_point * static_cast<double>(B);
        const double mean = ctx.net.mse_accumulate(
            ctx.params, std::span<const double>(Q_).subspan(lo * n_, B * n_),
            std::span<const double>(T_).subspan(lo * n_, B * n_), B, weight * factor, ctx.grad, ctx.ws);
        return mean * factor;
    }

private:
    SpatialPredictor predictor_;
    Hypercube domain_;
    std::size_t L_;
    std::uint64_t seed_;
    std::size_t n_;
    std::size_t num_batches_ = 1;
    std::vector<double> Q_, T_;
};

}  // namespace

EvolutionModel train_evolution(const SampleSet& samples, Direction direction,
                               const NetArchitecture& arch, const TrainConfig& config,
                               const ConsistencyOptions* consistency, const NetParams* init) {
    if (samples.empty()) throw InvalidArgument("training set is empty");
    const std::size_t n = samples.dim();
    if (arch.input_dim != n || arch.output_dim != n) {
        throw InvalidArgument("evolution network dims must equal the state dimension");
    }
    std::vector<double> X, Y;
    X.reserve(samples.size() * n);
    Y.reserve(samples.size() * n);
    for (const auto& p : samples.pairs) {
        const auto& in = direction == Direction::forward ? p.u0 : p.u1;
        const auto& out = direction == Direction::forward ? p.u1 : p.u0;
        X.insert(X.end(), in.begin(), in.end());
        Y.insert(Y.end(), out.begin(), out.end());
    }
    MseObjective objective(std::move(X), std::move(Y), n, n);

    std::unique_ptr<ConsistencyLoss> aux;
    if (direction == Direction::forward && consistency != nullptr && config.consistency_weight > 0.0) {
        if (!consistency->spatial || !consistency->spatial_samples || !consistency->domain) {
            throw InvalidArgument("consistency loss needs a spatial model, its samples and a domain");
        }
        if (consistency->points == 0) throw InvalidArgument("consistency loss needs at least one point");
        aux = std::make_unique<ConsistencyLoss>(*consistency, config.seed);
    }

    auto result = train(arch, objective, config, aux.get(), init);
    EvolutionModel model;
    model.direction = direction;
    model.arch = arch;
    model.params = std::move(result.params);
    model.optimizer = std::move(result.optimizer);
    model.trained_on_iteration = samples.iteration;
    return model;
}

std::vector<State> rollout(const StepMap& map, std::span<const double> u0, std::size_t K) {
    if (u0.size() != map.dim()) throw InvalidArgument("start state has the wrong dimension");
    std::vector<State> path;
    path.reserve(K + 1);
    path.emplace_back(u0.begin(), u0.end());
    for (std::size_t k = 0; k < K; ++k) {
        State next = map.apply_one(path.back());
        if (!all_finite(next)) {
            throw DivergenceError("rollout produced a non-finite state", static_cast<double>(k), k + 1);
        }
        path.push_back(std::move(next));
    }
    return path;
}

std::vector<State> rollout(const EvolutionModel& model, std::span<const double> u0, std::size_t K) {
    return rollout(NetworkMap(model), u0, K);
}

ReciprocalTrace reciprocal_trace(const StepMap& fwd, const StepMap& bwd, std::span<const double> u0,
                                 std::size_t K) {
    if (fwd.dim() != bwd.dim()) throw InvalidArgument("forward and backward maps disagree in dimension");
    ReciprocalTrace t;
    t.K = K;
    try {
        t.forward_path = rollout(fwd, u0, K);
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("forward ") + e.what(), e.last_valid_time(), e.step());
    }
    std::vector<State> back;
    try {
        back = rollout(bwd, t.forward_path.back(), K);
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string("backward ") + e.what(), e.last_valid_time(), e.step());
    }
    t.backward_path.assign(back.rbegin(), back.rend());
    return t;
}

BatchTrace reciprocal_trace_batch(const StepMap& fwd, const StepMap& bwd,
                                  std::span<const double> X, std::size_t count, std::size_t K) {
    if (fwd.dim() != bwd.dim()) throw InvalidArgument("forward and backward maps disagree in dimension");
    const std::size_t n = fwd.dim();
    if (X.size() != count * n) throw InvalidArgument("start batch has the wrong shape");
    BatchTrace t;
    t.count = count;
    t.dim = n;
    t.K = K;
    t.fwd.assign(K + 1, std::vector<double>(count * n));
    t.bwd.assign(K + 1, std::vector<double>(count * n));
    std::copy(X.begin(), X.end(), t.fwd[0].begin());
    for (std::size_t k = 0; k < K; ++k) fwd.apply(t.fwd[k], count, t.fwd[k + 1]);
    t.bwd[K] = t.fwd[K];
    for (std::size_t k = K; k-- > 0;) bwd.apply(t.bwd[k + 1], count, t.bwd[k]);
    return t;
}

}  // namespace critsamp
