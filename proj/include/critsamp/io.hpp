#pragma once

// Persistence: sample files, model/loop checkpoints and columnar exports.

#include <string>
#include <vector>

#include "json.hpp"

#include "critsamp/bounds.hpp"
#include "critsamp/config.hpp"
#include "critsamp/evonet.hpp"
#include "critsamp/sampler.hpp"
#include "critsamp/spatial.hpp"

namespace critsamp {

inline constexpr int kFormatVersion = 1;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// -------------------------------------------------------------------------------------
// Sample files: a `dim,delta,system` row, then `provenance,u0_1..u0_n,u1_1..u1_n`.

struct SampleFile {
    SampleSet samples;
    std::size_t dim = 0;
    double delta = 0.0;
    std::string system;
};

std::string format_samples(const SampleSet& samples, const SystemSpec& sys);
SampleFile parse_samples(const std::string& text);
void write_samples(const std::string& path, const SampleSet& samples, const SystemSpec& sys);
SampleFile read_samples(const std::string& path);

// -------------------------------------------------------------------------------------
// JSON documents. Non-finite doubles are stored as the strings "inf", "-inf", "nan".

nlohmann::json double_to_json(double v);
double double_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NetArchitecture& a);
NetArchitecture architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& s);
AdamState adam_from_json(const nlohmann::json& j);

/// {format_version, kind: "evolution", direction, architecture, params, optimizer, ...}
nlohmann::json to_json(const EvolutionModel& m);
EvolutionModel evolution_from_json(const nlohmann::json& j);
/// Same layout plus h_nn, order and the normalization vectors; kind "spatial".
nlohmann::json to_json(const SpatialModel& m);
SpatialModel spatial_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SampleSet& s);
SampleSet samples_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HistoryRow& r);
HistoryRow history_from_json(const nlohmann::json& j);

/// Full resumable loop state plus the resolved configuration it was produced with.
/// RNG state is positional: every stream is derived from (seed, iteration), so the
/// seed and next_iteration pin all future draws.
nlohmann::json loop_checkpoint(const LoopState& state, const RunConfig& config);
LoopState loop_state_from_checkpoint(const nlohmann::json& j);
RunConfig config_from_checkpoint(const nlohmann::json& j);

/// Throws ResumeMismatch naming the first differing key (runtime keys ignored).
void check_resume_config(const RunConfig& saved, const RunConfig& invoked);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// -------------------------------------------------------------------------------------
// Columnar exports

/// iteration,J_m,mean_recip,max_recip,infinite,eval_error,grid_truth,oracle_calls,eval_calls,seconds
std::string format_history(const std::vector<HistoryRow>& rows);
/// x_1..x_n,recip,truth (truth empty when absent)
std::string format_field(const ErrorField& field);
/// k,uhat_1..n,ubar_1..n
std::string format_trace(const ReciprocalTrace& trace);
/// k,empirical,bound,satisfied
std::string format_bounds(const std::vector<BoundRow>& rows);

}  // namespace critsamp
