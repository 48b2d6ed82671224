#include "critsamp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace critsamp {

using nlohmann::json;

namespace {

std::string g17(double v) { return fmt::format("{:.17g}", v); }

double parse_double(std::string_view s) {
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw IoError("malformed number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

json doubles_to_json(const std::vector<double>& v) {
    json a = json::array();
    for (const double x : v) a.push_back(double_to_json(x));
    return a;
}

std::vector<double> doubles_from_json(const json& j) {
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(double_from_json(x));
    return v;
}

void require_kind(const json& j, const char* kind) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion) {
        throw IoError("unsupported checkpoint format version");
    }
    if (j.value("kind", std::string()) != kind) {
        throw IoError(std::string("expected a '") + kind + "' document");
    }
}

}  // namespace

// -------------------------------------------------------------------------------------

std::string format_samples(const SampleSet& samples, const SystemSpec& sys) {
    std::string out = fmt::format("{},{},{}\n", sys.dim, g17(sys.delta), sys.name);
    for (const auto& p : samples.pairs) {
        if (p.u0.size() != sys.dim || p.u1.size() != sys.dim) throw IoError("sample pair has the wrong dimension");
        out += to_string(p.provenance);
        for (const double x : p.u0) out += "," + g17(x);
        for (const double x : p.u1) out += "," + g17(x);
        out += "\n";
    }
    return out;
}

SampleFile parse_samples(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    SampleFile f;
    if (!std::getline(is, line)) throw IoError("sample file is empty");
    const auto head = split(line, ',');
    if (head.size() != 3) throw IoError("sample file header must be dim,delta,system");
    f.dim = static_cast<std::size_t>(parse_double(head[0]));
    f.delta = parse_double(head[1]);
    f.system = std::string(head[2]);
    if (f.dim == 0) throw IoError("sample file dimension must be >= 1");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        if (cols.size() != 1 + 2 * f.dim) {
            throw IoError("sample file line " + std::to_string(lineno) + " has the wrong column count");
        }
        SamplePair p;
        try {
            p.provenance = provenance_from_string(cols[0]);
        } catch (const InvalidArgument& e) {
            throw IoError(e.what());
        }
        for (std::size_t i = 0; i < f.dim; ++i) p.u0.push_back(parse_double(cols[1 + i]));
        for (std::size_t i = 0; i < f.dim; ++i) p.u1.push_back(parse_double(cols[1 + f.dim + i]));
        f.samples.pairs.push_back(std::move(p));
    }
    return f;
}

void write_samples(const std::string& path, const SampleSet& samples, const SystemSpec& sys) {
    write_text(path, format_samples(samples, sys));
}

SampleFile read_samples(const std::string& path) { return parse_samples(read_text(path)); }

// -------------------------------------------------------------------------------------

json double_to_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double double_from_json(const json& j) {
    if (j.is_string()) return parse_double(j.get<std::string>());
    return j.get<double>();
}

json to_json(const NetArchitecture& a) {
    return {{"input_dim", a.input_dim},   {"output_dim", a.output_dim},
            {"blocks", a.blocks},         {"layers_per_block", a.layers_per_block},
            {"width", a.width},           {"activation", std::string(to_string(a.activation))}};
}

NetArchitecture architecture_from_json(const json& j) {
    NetArchitecture a;
    a.input_dim = j.at("input_dim").get<std::size_t>();
    a.output_dim = j.at("output_dim").get<std::size_t>();
    a.blocks = j.at("blocks").get<std::size_t>();
    a.layers_per_block = j.at("layers_per_block").get<std::size_t>();
    a.width = j.at("width").get<std::size_t>();
    a.activation = activation_from_string(j.at("activation").get<std::string>());
    a.validate();
    return a;
}

json to_json(const AdamState& s) {
    return {{"step", s.step}, {"m", doubles_to_json(s.m)}, {"v", doubles_to_json(s.v)}};
}

AdamState adam_from_json(const json& j) {
    AdamState s;
    s.step = j.at("step").get<std::uint64_t>();
    s.m = doubles_from_json(j.at("m"));
    s.v = doubles_from_json(j.at("v"));
    return s;
}

json to_json(const EvolutionModel& m) {
    return {{"format_version", kFormatVersion},
            {"kind", "evolution"},
            {"direction", std::string(to_string(m.direction))},
            {"trained_on_iteration", m.trained_on_iteration},
            {"architecture", to_json(m.arch)},
            {"params", doubles_to_json(m.params.values)},
            {"optimizer", to_json(m.optimizer)}};
}

EvolutionModel evolution_from_json(const json& j) {
    require_kind(j, "evolution");
    EvolutionModel m;
    m.direction = direction_from_string(j.at("direction").get<std::string>());
    m.trained_on_iteration = j.at("trained_on_iteration").get<int>();
    m.arch = architecture_from_json(j.at("architecture"));
    m.params.values = doubles_from_json(j.at("params"));
    m.optimizer = adam_from_json(j.at("optimizer"));
    if (m.params.values.size() != ParamLayout(m.arch).size()) throw IoError("parameter count does not match architecture");
    return m;
}

json to_json(const SpatialModel& m) {
    return {{"format_version", kFormatVersion},
            {"kind", "spatial"},
            {"dim", m.dim},
            {"h_nn", m.h_nn},
            {"order", m.order},
            {"coeff_count", m.coeff_count},
            {"skip_weight", double_to_json(m.skip_weight)},
            {"architecture", to_json(m.arch)},
            {"params", doubles_to_json(m.params.values)},
            {"optimizer", to_json(m.optimizer)},
            {"feature_shift", doubles_to_json(m.feature_shift)},
            {"feature_scale", doubles_to_json(m.feature_scale)},
            {"coord_shift", doubles_to_json(m.coord_shift)},
            {"coord_scale", doubles_to_json(m.coord_scale)}};
}

SpatialModel spatial_from_json(const json& j) {
    require_kind(j, "spatial");
    SpatialModel m;
    m.dim = j.at("dim").get<std::size_t>();
    m.h_nn = j.at("h_nn").get<std::size_t>();
    m.order = j.at("order").get<unsigned>();
    m.coeff_count = j.at("coeff_count").get<std::size_t>();
    m.skip_weight = double_from_json(j.at("skip_weight"));
    m.arch = architecture_from_json(j.at("architecture"));
    m.params.values = doubles_from_json(j.at("params"));
    m.optimizer = adam_from_json(j.at("optimizer"));
    m.feature_shift = doubles_from_json(j.at("feature_shift"));
    m.feature_scale = doubles_from_json(j.at("feature_scale"));
    m.coord_shift = doubles_from_json(j.at("coord_shift"));
    m.coord_scale = doubles_from_json(j.at("coord_scale"));
    if (m.coeff_count != monomial_count(m.dim, m.order) || m.arch.input_dim != m.encoding_size() ||
        m.arch.output_dim != m.dim * m.coeff_count || m.params.values.size() != ParamLayout(m.arch).size()) {
        throw IoError("spatial model header does not match its architecture");
    }
    return m;
}

json to_json(const SampleSet& s) {
    json pairs = json::array();
    for (const auto& p : s.pairs) {
        pairs.push_back({std::string(to_string(p.provenance)), doubles_to_json(p.u0), doubles_to_json(p.u1)});
    }
    return {{"iteration", s.iteration}, {"pairs", pairs}};
}

SampleSet samples_from_json(const json& j) {
    SampleSet s;
    s.iteration = j.at("iteration").get<int>();
    for (const auto& p : j.at("pairs")) {
        SamplePair q;
        q.provenance = provenance_from_string(p.at(0).get<std::string>());
        q.u0 = doubles_from_json(p.at(1));
        q.u1 = doubles_from_json(p.at(2));
        s.pairs.push_back(std::move(q));
    }
    return s;
}

json to_json(const HistoryRow& r) {
    return {{"iteration", r.iteration},
            {"samples", r.samples},
            {"mean_recip", double_to_json(r.mean_recip)},
            {"max_recip", double_to_json(r.max_recip)},
            {"infinite", r.infinite},
            {"eval_error", double_to_json(r.eval_error)},
            {"grid_truth", double_to_json(r.grid_truth)},
            {"oracle_calls", r.oracle_calls},
            {"eval_calls", r.eval_calls},
            {"seconds", double_to_json(r.seconds)}};
}

HistoryRow history_from_json(const json& j) {
    HistoryRow r;
    r.iteration = j.at("iteration").get<int>();
    r.samples = j.at("samples").get<std::size_t>();
    r.mean_recip = double_from_json(j.at("mean_recip"));
    r.max_recip = double_from_json(j.at("max_recip"));
    r.infinite = j.at("infinite").get<std::size_t>();
    r.eval_error = double_from_json(j.at("eval_error"));
    r.grid_truth = double_from_json(j.at("grid_truth"));
    r.oracle_calls = j.at("oracle_calls").get<std::uint64_t>();
    r.eval_calls = j.at("eval_calls").get<std::uint64_t>();
    r.seconds = double_from_json(j.at("seconds"));
    return r;
}

json loop_checkpoint(const LoopState& state, const RunConfig& config) {
    json history = json::array();
    for (const auto& r : state.history) history.push_back(to_json(r));
    json j = {{"format_version", kFormatVersion},
              {"kind", "loop"},
              {"config", config.values()},
              {"rng", {{"scheme", "derive_seed(seed, stream, iteration)"},
                       {"seed", config.get_u64("seed")},
                       {"next_iteration", state.next_iteration}}},
              {"next_iteration", state.next_iteration},
              {"oracle_calls", state.oracle_calls},
              {"eval_calls", state.eval_calls},
              {"finished", state.finished},
              {"stop_reason", state.stop_reason},
              {"samples", to_json(state.samples)},
              {"history", history},
              {"has_models", state.has_models}};
    if (state.has_models) {
        j["forward"] = to_json(state.forward);
        j["backward"] = to_json(state.backward);
        if (state.spatial.dim != 0) j["spatial"] = to_json(state.spatial);
    }
    return j;
}

LoopState loop_state_from_checkpoint(const json& j) {
    require_kind(j, "loop");
    LoopState s;
    s.next_iteration = j.at("next_iteration").get<int>();
    s.oracle_calls = j.at("oracle_calls").get<std::uint64_t>();
    s.eval_calls = j.at("eval_calls").get<std::uint64_t>();
    s.finished = j.at("finished").get<bool>();
    s.stop_reason = j.at("stop_reason").get<std::string>();
    s.samples = samples_from_json(j.at("samples"));
    for (const auto& r : j.at("history")) s.history.push_back(history_from_json(r));
    s.has_models = j.at("has_models").get<bool>();
    if (s.has_models) {
        s.forward = evolution_from_json(j.at("forward"));
        s.backward = evolution_from_json(j.at("backward"));
        if (j.contains("spatial")) s.spatial = spatial_from_json(j.at("spatial"));
    }
    return s;
}

RunConfig config_from_checkpoint(const json& j) {
    require_kind(j, "loop");
    std::vector<Assignment> a;
    for (const auto& [k, v] : j.at("config").items()) a.emplace_back(k, v.get<std::string>());
    return RunConfig::resolve(a);
}

void check_resume_config(const RunConfig& saved, const RunConfig& invoked) {
    for (const auto& [k, v] : saved.values()) {
        if (is_runtime_key(k)) continue;
        if (invoked.get(k) != v) {
            throw ResumeMismatch("checkpoint was written with " + k + "=" + v + ", invocation has " + k + "=" +
                                 invoked.get(k));
        }
    }
}

void write_text(const std::string& path, const std::string& text) {
    // Write-then-rename so an interrupted write never leaves a truncated checkpoint.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << text;
        if (!out) throw IoError("write to '" + path + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot replace '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

json read_json(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw IoError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// -------------------------------------------------------------------------------------

std::string format_history(const std::vector<HistoryRow>& rows) {
    std::string out =
        "iteration,J_m,mean_recip,max_recip,infinite,eval_error,grid_truth,oracle_calls,eval_calls,seconds\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.iteration, r.samples, g17(r.mean_recip),
                           g17(r.max_recip), r.infinite, g17(r.eval_error), g17(r.grid_truth), r.oracle_calls,
                           r.eval_calls, g17(r.seconds));
    }
    return out;
}

std::string format_field(const ErrorField& field) {
    std::string out;
    for (std::size_t i = 0; i < field.dim; ++i) out += fmt::format("x_{},", i + 1);
    out += "recip,truth\n";
    for (std::size_t p = 0; p < field.size(); ++p) {
        for (const double x : field.point(p)) out += g17(x) + ",";
        out += g17(field.reciprocal[p]) + ",";
        if (field.has_truth()) out += g17(field.truth[p]);
        out += "\n";
    }
    return out;
}

std::string format_trace(const ReciprocalTrace& trace) {
    const std::size_t n = trace.forward_path.empty() ? 0 : trace.forward_path.front().size();
    std::string out = "k";
    for (std::size_t i = 0; i < n; ++i) out += fmt::format(",uhat_{}", i + 1);
    for (std::size_t i = 0; i < n; ++i) out += fmt::format(",ubar_{}", i + 1);
    out += "\n";
    for (std::size_t k = 0; k <= trace.K; ++k) {
        out += std::to_string(k);
        for (const double x : trace.forward_path[k]) out += "," + g17(x);
        for (const double x : trace.backward_path[k]) out += "," + g17(x);
        out += "\n";
    }
    return out;
}

std::string format_bounds(const std::vector<BoundRow>& rows) {
    std::string out = "k,empirical,bound,satisfied\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{}\n", r.k, g17(r.empirical), g17(r.bound), r.satisfied ? 1 : 0);
    }
    return out;
}

}  // namespace critsamp
