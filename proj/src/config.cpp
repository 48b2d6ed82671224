#include "critsamp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace critsamp {

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> default_values(const std::string& system) {
    SystemSpec sys;
    try {
        sys = systems::by_name(system);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    const LoopConfig c = default_loop_config(sys);
    const EvalProtocol p = default_protocol(sys, 1000003);
    const BoundStudyOptions b;
    std::map<std::string, std::string> v;
    v["system"] = system;
    v["seed"] = "1";
    v["threads"] = "1";

    v["sampler.J0"] = num(c.J0);
    v["sampler.batch_per_iter"] = num(c.batch_per_iter);
    v["sampler.K"] = num(c.K);
    v["sampler.suppression_fraction"] = num(c.suppression_fraction);
    v["sampler.confine_candidates"] = flag(c.confine_candidates);
    v["sampler.stop_mode"] = std::string(to_string(c.stop_mode));
    v["sampler.threshold"] = num(c.threshold);
    v["sampler.budget"] = num(c.budget);
    v["sampler.max_iterations"] = num(c.max_iterations);
    v["sampler.track_eval"] = flag(c.track_eval);
    v["sampler.warm_start"] = flag(c.warm_start);

    v["spatial.augmentation"] = flag(c.augmentation);
    v["spatial.augment_factor"] = num(c.augment_factor);
    v["spatial.augment_cap"] = num(c.augment_cap);
    v["spatial.h_nn"] = num(c.spatial.h_nn);
    v["spatial.order"] = num(static_cast<std::size_t>(c.spatial.order));
    v["spatial.blocks"] = num(c.spatial.blocks);
    v["spatial.layers_per_block"] = num(c.spatial.layers_per_block);
    v["spatial.width"] = num(c.spatial.width);

    v["evonet.blocks"] = num(c.evo_arch.blocks);
    v["evonet.layers_per_block"] = num(c.evo_arch.layers_per_block);
    v["evonet.width"] = num(c.evo_arch.width);
    v["evonet.consistency_weight"] = num(c.consistency_weight);
    v["evonet.consistency_points"] = num(c.consistency_points);

    v["train.epochs"] = num(c.train.epochs);
    v["train.batch_size"] = num(c.train.batch_size);
    v["train.lr_initial"] = num(c.train.lr_initial);
    v["train.lr_final"] = num(c.train.lr_final);
    v["train.adam_beta1"] = num(c.train.adam.beta1);
    v["train.adam_beta2"] = num(c.train.adam.beta2);
    v["train.adam_eps"] = num(c.train.adam.eps);

    v["eval.seed"] = std::to_string(p.seed);
    v["eval.n_trajectories"] = num(p.n_trajectories);
    v["eval.horizon"] = num(p.horizon);
    v["eval.confined"] = flag(p.confined);
    v["eval.pde_points"] = num(p.pde_points);

    v["bounds.K"] = num(b.K);
    v["bounds.test_points"] = num(b.test_points);
    v["bounds.grid_points"] = num(b.grid_points);
    v["bounds.lipschitz_samples"] = num(b.lipschitz_samples);

    v["field.points"] = "400";
    v["field.with_truth"] = "true";

    v["run.stop_after"] = "0";
    v["run.checkpoint"] = "true";

    // 0 selects each experiment's own default.
    v["experiment.seeds"] = "1";
    v["experiment.baseline_samples"] = "0";
    v["experiment.samples"] = "0";
    v["experiment.measure_baseline"] = "true";
    return v;
}

}  // namespace

bool is_runtime_key(const std::string& key) {
    return key == "threads" || key == "run.stop_after" || key == "run.checkpoint";
}

RunConfig RunConfig::defaults(const std::string& system) {
    RunConfig c;
    c.values_ = default_values(system);
    return c;
}

RunConfig RunConfig::resolve(const std::vector<Assignment>& assignments) {
    std::string system = "pendulum";
    for (const auto& [k, v] : assignments) {
        if (k == "system") system = v;
    }
    RunConfig c = defaults(system);
    for (const auto& [k, v] : assignments) {
        if (k != "system") c.set(k, v);
    }
    // Fail early on values that do not parse.
    (void)c.loop_config();
    (void)c.protocol();
    (void)c.bound_options();
    (void)c.get_size("field.points");
    (void)c.get_bool("field.with_truth");
    (void)c.get_size("run.stop_after");
    (void)c.get_bool("run.checkpoint");
    (void)c.get_size("experiment.baseline_samples");
    (void)c.get_size("experiment.samples");
    (void)c.get_bool("experiment.measure_baseline");
    (void)c.seed_list();
    return c;
}

std::vector<Assignment> RunConfig::parse(const std::string& text) {
    std::vector<Assignment> out;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        }
        out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

std::vector<Assignment> RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    if (key == "system" && value != it->second) {
        throw ConfigError("system must be fixed before other keys are resolved");
    }
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "' needs a number, got '" + s + "'");
    }
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError("config key '" + key + "' needs a nonnegative integer, got '" + s + "'");
    }
    return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
    return static_cast<std::size_t>(get_u64(key));
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "' needs true/false, got '" + s + "'");
}

SystemSpec RunConfig::system() const { return systems::by_name(get("system")); }

LoopConfig RunConfig::loop_config() const {
    const SystemSpec sys = system();
    LoopConfig c = default_loop_config(sys);
    c.seed = get_u64("seed");
    c.threads = get_size("threads");
    c.J0 = get_size("sampler.J0");
    c.batch_per_iter = get_size("sampler.batch_per_iter");
    c.K = get_size("sampler.K");
    c.suppression_fraction = get_double("sampler.suppression_fraction");
    c.confine_candidates = get_bool("sampler.confine_candidates");
    try {
        c.stop_mode = stop_mode_from_string(get("sampler.stop_mode"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    c.threshold = get_double("sampler.threshold");
    c.budget = get_size("sampler.budget");
    c.max_iterations = get_size("sampler.max_iterations");
    c.track_eval = get_bool("sampler.track_eval");
    c.warm_start = get_bool("sampler.warm_start");

    c.augmentation = get_bool("spatial.augmentation");
    c.augment_factor = get_size("spatial.augment_factor");
    c.augment_cap = get_size("spatial.augment_cap");
    c.spatial.h_nn = get_size("spatial.h_nn");
    c.spatial.order = static_cast<unsigned>(get_size("spatial.order"));
    c.spatial.blocks = get_size("spatial.blocks");
    c.spatial.layers_per_block = get_size("spatial.layers_per_block");
    c.spatial.width = get_size("spatial.width");

    c.evo_arch.blocks = get_size("evonet.blocks");
    c.evo_arch.layers_per_block = get_size("evonet.layers_per_block");
    c.evo_arch.width = get_size("evonet.width");
    c.consistency_weight = get_double("evonet.consistency_weight");
    c.consistency_points = get_size("evonet.consistency_points");

    c.train.epochs = get_size("train.epochs");
    c.train.batch_size = get_size("train.batch_size");
    c.train.lr_initial = get_double("train.lr_initial");
    c.train.lr_final = get_double("train.lr_final");
    c.train.adam.beta1 = get_double("train.adam_beta1");
    c.train.adam.beta2 = get_double("train.adam_beta2");
    c.train.adam.eps = get_double("train.adam_eps");
    try {
        c.validate(sys);
        c.evo_arch.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

EvalProtocol RunConfig::protocol() const {
    EvalProtocol p = default_protocol(system(), get_u64("eval.seed"));
    p.n_trajectories = get_size("eval.n_trajectories");
    p.horizon = get_double("eval.horizon");
    p.confined = get_bool("eval.confined");
    p.pde_points = get_size("eval.pde_points");
    if (p.n_trajectories == 0) throw ConfigError("eval.n_trajectories must be >= 1");
    if (!(p.horizon > 0.0)) throw ConfigError("eval.horizon must be positive");
    return p;
}

BoundStudyOptions RunConfig::bound_options() const {
    BoundStudyOptions b;
    b.K = get_size("bounds.K");
    b.test_points = get_size("bounds.test_points");
    b.grid_points = get_size("bounds.grid_points");
    b.lipschitz_samples = get_size("bounds.lipschitz_samples");
    b.seed = get_u64("seed");
    if (b.K == 0 || b.test_points == 0 || b.lipschitz_samples == 0) {
        throw ConfigError("bounds.K, bounds.test_points and bounds.lipschitz_samples must be >= 1");
    }
    return b;
}

std::vector<std::uint64_t> RunConfig::seed_list() const {
    std::vector<std::uint64_t> out;
    const std::string& s = get("experiment.seeds");
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const std::string item = trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("experiment.seeds needs a comma-separated list of integers, got '" + s + "'");
        }
        out.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::string> RunConfig::known_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, v] : default_values("pendulum")) keys.push_back(k);
    return keys;
}

}  // namespace critsamp
