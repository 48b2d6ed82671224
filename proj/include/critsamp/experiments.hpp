#pragma once

// Named reproduction experiments at desk scale. Each writes a
// JSON report plus plot-ready CSV files into an output directory.

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "critsamp/config.hpp"
#include "critsamp/evalbench.hpp"

namespace critsamp {

using LogFn = std::function<void(const std::string&)>;

std::vector<std::string> experiment_names();

/// Throws ConfigError listing the valid names when `name` is unknown.
nlohmann::json run_experiment(const std::string& name, const RunConfig& config, const std::string& out_dir,
                              const LogFn& log = {});

/// The critical loop exactly as `loop` runs it: evaluator from the config's protocol
/// unless the stop mode is proxy-only.
LoopState run_critical_loop(const RunConfig& config, const LogFn& log = {},
                            const std::function<bool(const LoopState&)>& on_iteration = {},
                            const LoopState* resume = nullptr);

/// First history row whose evaluation error is <= target, or nullptr.
const HistoryRow* first_reaching(const std::vector<HistoryRow>& history, double target);

struct KSweepRow {
    std::size_t K = 0;
    std::size_t samples = 0;
    double error = 0.0;
};

/// One critical loop per K up to `samples` oracle samples; the error is the
/// evaluation error of the final models.
std::vector<KSweepRow> k_sweep(const RunConfig& config, const std::vector<std::size_t>& Ks,
                               std::size_t samples, const LogFn& log = {});

struct FrequencyRow {
    double target = 0.0;
    std::size_t baseline_samples = 0;  // uniform sample count the target is paired with
    std::size_t critical_samples = 0;  // 0 when the loop never reached the target
    double critical_error = 0.0;
    double ratio = 0.0;                // baseline_samples / critical_samples (0 if unreached)
    double baseline_error = -1.0;      // measured uniform baseline, -1 when not run
};

struct FrequencySweep {
    std::vector<FrequencyRow> rows;
    std::vector<HistoryRow> history;
};

/// Runs the loop in oracle-error-threshold mode down to the smallest target (capped
/// by the config budget) and records where each target was first reached.
FrequencySweep frequency_sweep(const RunConfig& config, const std::vector<double>& targets,
                               const std::vector<std::size_t>& baseline_samples, bool measure_baseline,
                               const LogFn& log = {});

struct CorrelationResult {
    ErrorField field;
    Correlation correlation;
    std::size_t samples = 0;
};

/// Trains the first loop round on J0 uniform samples and evaluates both errors on a
/// `points`-point grid (regular for n = 2, low-discrepancy otherwise).
CorrelationResult correlation_study(const RunConfig& config, std::size_t points);

/// Regular cell-centred grid for n = 2 when `points` is a perfect square, Halton otherwise.
std::vector<State> study_grid(const Hypercube& domain, std::size_t points);

}  // namespace critsamp
