#pragma once

// Forward and backward evolution networks, rollouts and reciprocal traces.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "critsamp/dynsys.hpp"
#include "critsamp/spatial.hpp"
#include "critsamp/tensornet.hpp"

namespace critsamp {

enum class Direction { forward, backward };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

struct EvolutionModel {
    Direction direction = Direction::forward;
    NetArchitecture arch;
    NetParams params;
    AdamState optimizer;  // state at the end of training
    int trained_on_iteration = 0;

    bool operator==(const EvolutionModel&) const = default;
};

/// A one-lag map applied to a row-major batch of states. Implementations are
/// immutable and safe to share between threads.
class StepMap {
public:
    virtual ~StepMap() = default;
    virtual std::size_t dim() const = 0;
    /// Y = map(X), both count x dim.
    virtual void apply(std::span<const double> X, std::size_t count, std::span<double> Y) const = 0;

    State apply_one(std::span<const double> x) const;
};

class NetworkMap final : public StepMap {
public:
    explicit NetworkMap(const EvolutionModel& model);
    std::size_t dim() const override { return net_.arch().input_dim; }
    void apply(std::span<const double> X, std::size_t count, std::span<double> Y) const override;

private:
    Network net_;
    std::vector<double> params_;
};

/// Wraps a per-state function (test maps, reference flows).
class FunctionMap final : public StepMap {
public:
    using Fn = std::function<State(std::span<const double>)>;
    FunctionMap(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    std::size_t dim() const override { return dim_; }
    void apply(std::span<const double> X, std::size_t count, std::span<double> Y) const override;

private:
    std::size_t dim_;
    Fn fn_;
};

/// The reference flow Phi_delta of a system as a map.
FunctionMap reference_map(const SystemSpec& sys);

/// Every pair (u0 -> u1) becomes (u1 -> u0); provenance and order preserved.
SampleSet reverse_pairs(const SampleSet& samples);

struct ConsistencyOptions {
    const SpatialModel* spatial = nullptr;
    const SampleSet* spatial_samples = nullptr;  // the oracle set the SDN predicts from
    const Hypercube* domain = nullptr;
    std::size_t points = 500;                    // L, redrawn every epoch
};

/// Trains F (direction forward) on `samples` or G (direction backward) on the
/// reversed `samples`. The consistency term is used only for the forward model and
/// only when config.consistency_weight > 0.
EvolutionModel train_evolution(const SampleSet& samples, Direction direction,
                               const NetArchitecture& arch, const TrainConfig& config,
                               const ConsistencyOptions* consistency = nullptr,
                               const NetParams* init = nullptr);

/// path[0] = u0, path[k + 1] = map(path[k]). Throws DivergenceError on a
/// non-finite state; its step() is the index of the first bad state.
std::vector<State> rollout(const StepMap& map, std::span<const double> u0, std::size_t K);
std::vector<State> rollout(const EvolutionModel& model, std::span<const double> u0, std::size_t K);

struct ReciprocalTrace {
    std::vector<State> forward_path;   // u_hat(k), k = 0..K
    std::vector<State> backward_path;  // u_bar(k), k = 0..K; u_bar(K) = u_hat(K)
    std::size_t K = 0;
};

ReciprocalTrace reciprocal_trace(const StepMap& fwd, const StepMap& bwd, std::span<const double> u0,
                                 std::size_t K);

/// Forward and backward paths for a batch of start points without the
/// per-state bookkeeping: fwd[k] and bwd[k] are count x dim blocks. Non-finite
/// entries are left in place for the caller to inspect.
struct BatchTrace {
    std::size_t count = 0, dim = 0, K = 0;
    std::vector<std::vector<double>> fwd, bwd;
};

BatchTrace reciprocal_trace_batch(const StepMap& fwd, const StepMap& bwd,
                                  std::span<const double> X, std::size_t count, std::size_t K);

}  // namespace critsamp
