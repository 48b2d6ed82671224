#pragma once

// Reciprocal prediction error, error fields, peak selection and the critical
// sampling loop.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "critsamp/dynsys.hpp"
#include "critsamp/evonet.hpp"
#include "critsamp/spatial.hpp"
#include "critsamp/tensornet.hpp"

namespace critsamp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// sum_{k=0}^{K} ||u_hat(k) - u_bar(k)||^2; +infinity if either rollout leaves the
/// finite numbers.
double reciprocal_error(const StepMap& fwd, const StepMap& bwd, std::span<const double> u0,
                        std::size_t K);

/// Batched reciprocal_error over row-major start points.
std::vector<double> reciprocal_errors(const StepMap& fwd, const StepMap& bwd,
                                      std::span<const double> X, std::size_t count, std::size_t K,
                                      std::size_t threads = 1);

/// ||F(u0) - Phi_delta(u0)||; one evaluation call on the oracle.
double true_modeling_error(const StepMap& fwd, Oracle& oracle, std::span<const double> u0);

struct ErrorField {
    std::size_t dim = 0;
    std::vector<double> points;      // count x dim
    std::vector<double> reciprocal;  // >= 0 or +inf
    std::vector<double> truth;       // empty unless evaluated with an oracle

    std::size_t size() const { return reciprocal.size(); }
    bool has_truth() const { return !truth.empty(); }
    std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
};

/// Evaluates the reciprocal error (and the true error if `truth_oracle` is given)
/// at each candidate.
ErrorField error_field(const StepMap& fwd, const StepMap& bwd, std::span<const double> candidates,
                       std::size_t count, std::size_t K, Oracle* truth_oracle = nullptr,
                       std::size_t threads = 1);

ErrorField error_field(const StepMap& fwd, const StepMap& bwd, const std::vector<State>& candidates,
                       std::size_t K, Oracle* truth_oracle = nullptr, std::size_t threads = 1);

/// The part of `field` where the model's own forward path u_hat(1..K) stays inside
/// `domain`, plus every point with an infinite reciprocal error. Outside that set
/// both networks extrapolate, so the peaks carry no information about D.
ErrorField model_confined(const ErrorField& field, const StepMap& fwd, std::size_t K,
                          const Hypercube& domain);

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
    std::size_t used = 0;  // pairs with both values finite
};

double pearson(std::span<const double> a, std::span<const double> b);
/// Pearson on average ranks (ties share the mean rank).
double spearman(std::span<const double> a, std::span<const double> b);

/// Correlation between reciprocal and true error; non-finite pairs are dropped.
Correlation correlation(const ErrorField& field);

struct PeakSelection {
    std::vector<std::size_t> indices;  // into the field
    std::vector<State> points;
    bool exhausted = false;            // fewer than the requested count were eligible
};

/// Greedy argmax with suppression of all candidates within `radius` of each pick.
/// Ties go to the lowest index; candidates within `exclude_tol` of an oracle u0 in
/// `exclude` are never picked.
PeakSelection select_peaks(const ErrorField& field, std::size_t count, double radius,
                           const SampleSet* exclude = nullptr, double exclude_tol = 1e-9);

// -------------------------------------------------------------------------------------
// Critical sampling loop

enum class StopMode { oracle_error_threshold, proxy_threshold, sample_budget };

std::string_view to_string(StopMode m);
StopMode stop_mode_from_string(std::string_view s);

/// What the oracle-mode evaluation measures.
enum class EvalMetric { trajectory, grid };

std::string_view to_string(EvalMetric m);
EvalMetric eval_metric_from_string(std::string_view s);

struct LoopConfig {
    std::size_t J0 = 100;
    std::size_t batch_per_iter = 36;
    std::size_t K = 5;
    double suppression_fraction = 0.02;  // of the domain diagonal
    /// Select peaks only where the forward model path stays in D (see model_confined).
    bool confine_candidates = true;
    StopMode stop_mode = StopMode::sample_budget;
    double threshold = 0.0;
    std::size_t budget = 450;             // hard cap on oracle samples in every mode
    std::size_t max_iterations = 1000;
    std::uint64_t seed = 0;
    /// Evaluate the oracle-based error every iteration in sample-budget mode.
    bool track_eval = true;
    bool warm_start = false;

    bool augmentation = true;
    std::size_t augment_factor = 20;
    std::size_t augment_cap = 20000;
    double consistency_weight = 0.1;
    std::size_t consistency_points = 500;

    NetArchitecture evo_arch;
    TrainConfig train;
    SpatialHyper spatial;
    std::size_t threads = 1;

    void validate(const SystemSpec& sys) const;
    std::size_t augment_count(std::size_t oracle_count) const;
};

/// Defaults for a built-in system (architecture, epochs, J0, batch size).
LoopConfig default_loop_config(const SystemSpec& sys);

struct HistoryRow {
    int iteration = 0;
    std::size_t samples = 0;  // J_m
    double mean_recip = 0.0;  // over finite values
    double max_recip = 0.0;   // over finite values
    std::size_t infinite = 0;
    double eval_error = std::numeric_limits<double>::quiet_NaN();
    double grid_truth = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t oracle_calls = 0;
    std::uint64_t eval_calls = 0;
    double seconds = 0.0;  // wall time; excluded from determinism comparisons

    /// Equality of every field except `seconds`.
    bool same_result(const HistoryRow& o) const;
};

struct LoopState {
    SampleSet samples;  // S_F for `next_iteration`
    std::vector<HistoryRow> history;
    int next_iteration = 0;
    std::uint64_t oracle_calls = 0;
    std::uint64_t eval_calls = 0;
    bool finished = false;
    std::string stop_reason;
    EvolutionModel forward, backward;
    SpatialModel spatial;
    bool has_models = false;
};

struct TrainedModels {
    SpatialModel spatial;
    bool has_spatial = false;
    SampleSet augmented;  // S_bar_F
    EvolutionModel forward, backward;
};

/// One training round on S_F: SDN, augmentation, F (with consistency), G.
/// Seeds are derived from (config.seed, iteration).
TrainedModels train_round(const SystemSpec& sys, const SampleSet& samples, const LoopConfig& config,
                          int iteration, const LoopState* warm = nullptr);

struct LoopCallbacks {
    /// Oracle-based error of a forward model; counts its own evaluation calls on
    /// the oracle passed in. Used when the stop mode or track_eval asks for it.
    std::function<double(const EvolutionModel&, Oracle&)> evaluator;
    /// Called after each completed iteration; return false to pause the loop.
    std::function<bool(const LoopState&)> on_iteration;
    std::function<void(const std::string&)> log;
};

/// Mean one-step true error of `fwd` over a fixed grid of `points` uniform
/// states; `points` evaluation calls.
double grid_modeling_error(const StepMap& fwd, Oracle& oracle, std::size_t points,
                           std::uint64_t seed);

/// Runs (or resumes) the loop until the stop rule fires or on_iteration pauses it.
LoopState critical_sampling_loop(const SystemSpec& sys, const LoopConfig& config,
                                 const LoopCallbacks& callbacks = {},
                                 const LoopState* resume = nullptr);

}  // namespace critsamp
