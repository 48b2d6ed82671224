// critsamp command-line front end.
//
// Exit codes: 0 success, 1 other failure, 2 configuration/usage error,
// 3 divergence, 4 resume mismatch.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "critsamp/bounds.hpp"
#include "critsamp/config.hpp"
#include "critsamp/evalbench.hpp"
#include "critsamp/experiments.hpp"
#include "critsamp/io.hpp"

namespace fs = std::filesystem;
using namespace critsamp;
using nlohmann::json;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, divergence = 3, resume_mismatch = 4 };

struct Common {
    std::string config_path;
    std::string out;
    std::vector<std::string> sets;
    std::string seed;
    std::string threads;
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

std::vector<Assignment> flag_assignments(const Common& c) {
    std::vector<Assignment> a;
    if (!c.seed.empty()) a.emplace_back("seed", c.seed);
    if (!c.threads.empty()) a.emplace_back("threads", c.threads);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
        a.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return a;
}

/// File values first, then --seed/--threads, then every --set in order.
RunConfig resolve(const Common& c, std::vector<Assignment> prefix = {}) {
    if (!c.config_path.empty()) {
        const auto file = RunConfig::parse_file(c.config_path);
        prefix.insert(prefix.end(), file.begin(), file.end());
    }
    const auto flags = flag_assignments(c);
    prefix.insert(prefix.end(), flags.begin(), flags.end());
    return RunConfig::resolve(prefix);
}

std::string out_dir(const Common& c) {
    if (!c.out.empty()) return c.out;
    if (const char* root = std::getenv("CRITSAMP_OUT"); root != nullptr && *root != '\0') return root;
    return "critsamp-out";
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void persist_config(const std::string& dir, const RunConfig& config) {
    fs::create_directories(dir);
    write_text(join(dir, "config.txt"), config.serialize());
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "output directory (default $CRITSAMP_OUT or ./critsamp-out)");
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--threads", c.threads, "worker threads");
    app->add_option("--set", c.sets, "key=value override, repeatable")->take_all();
}

struct Models {
    EvolutionModel forward, backward;
    std::size_t samples = 0;
};

/// Models from a loop checkpoint, or one training round on J0 uniform samples.
Models load_or_train(const std::string& checkpoint, const RunConfig& config) {
    if (!checkpoint.empty()) {
        const LoopState s = loop_state_from_checkpoint(read_json(checkpoint));
        if (!s.has_models) throw IoError("checkpoint " + checkpoint + " holds no trained models");
        return {s.forward, s.backward, s.samples.oracle_count()};
    }
    const SystemSpec sys = config.system();
    const LoopConfig lc = config.loop_config();
    Oracle oracle(sys);
    const SampleSet S = generate_initial_set(oracle, lc.J0, lc.seed);
    const TrainedModels m = train_round(sys, S, lc, 0, nullptr);
    return {m.forward, m.backward, S.oracle_count()};
}

void write_loop_outputs(const std::string& dir, const LoopState& s, const RunConfig& config) {
    const SystemSpec sys = config.system();
    write_json(join(dir, "checkpoint.json"), loop_checkpoint(s, config));
    write_text(join(dir, "history.csv"), format_history(s.history));
    write_samples(join(dir, "samples.csv"), s.samples, sys);
}

int run_loop(const std::string& dir, const RunConfig& config, const LoopState* resume) {
    persist_config(dir, config);
    const std::size_t stop_after = config.get_size("run.stop_after");
    const bool checkpoint = config.get_bool("run.checkpoint");
    std::size_t done = 0;
    auto on_iteration = [&](const LoopState& s) {
        if (checkpoint) write_loop_outputs(dir, s, config);
        ++done;
        return stop_after == 0 || done < stop_after;
    };
    const LoopState s = run_critical_loop(config, log_line, on_iteration, resume);
    write_loop_outputs(dir, s, config);
    if (s.has_models) {
        write_json(join(dir, "forward.json"), to_json(s.forward));
        write_json(join(dir, "backward.json"), to_json(s.backward));
    }
    log_line(fmt::format("{} after {} iterations, {} oracle samples", s.finished ? s.stop_reason : "paused",
                         s.next_iteration, s.samples.oracle_count()));
    return ok;
}

std::string default_system(const std::string& experiment) {
    if (experiment.rfind("table2-", 0) == 0) return experiment.substr(7);
    if (experiment == "table6-mno-protocol") return "lorenz-coarse";
    return "pendulum";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Critical sampling for learning evolution operators of dynamical systems"};
    app.require_subcommand(1);

    Common c;
    std::string checkpoint;
    std::string experiment;
    bool reference = false;

    auto* generate = app.add_subcommand("generate", "write the initial uniform sample set");
    auto* loop = app.add_subcommand("loop", "run the critical sampling loop, checkpointing every iteration");
    auto* resume = app.add_subcommand("resume", "continue a loop from <out>/checkpoint.json");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint's forward model under the system protocol");
    auto* field = app.add_subcommand("field", "export the reciprocal (and true) error field");
    auto* bounds = app.add_subcommand("bounds", "check the error bounds on trained models");
    auto* exp = app.add_subcommand("experiment", "run a named experiment");
    for (auto* s : {generate, loop, resume, eval, field, bounds, exp}) add_common(s, c);
    for (auto* s : {eval, field, bounds}) {
        s->add_option("--checkpoint", checkpoint, "loop checkpoint (field/bounds train round 0 when omitted)");
    }
    eval->add_flag("--reference", reference, "evaluate the reference flow itself as the model");
    exp->add_option("name", experiment, "experiment name")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config_error;
    }

    try {
        const std::string dir = out_dir(c);
        if (generate->parsed()) {
            const RunConfig config = resolve(c);
            persist_config(dir, config);
            const SystemSpec sys = config.system();
            const LoopConfig lc = config.loop_config();
            Oracle oracle(sys);
            write_samples(join(dir, "samples.csv"), generate_initial_set(oracle, lc.J0, lc.seed), sys);
        } else if (loop->parsed()) {
            return run_loop(dir, resolve(c), nullptr);
        } else if (resume->parsed()) {
            const json j = read_json(join(dir, "checkpoint.json"));
            const RunConfig saved = config_from_checkpoint(j);
            std::vector<Assignment> base;
            if (c.config_path.empty()) {
                // A pause request applies to the invocation that made it.
                for (const auto& kv : saved.values()) {
                    if (kv.first != "run.stop_after") base.push_back(kv);
                }
            }
            const RunConfig invoked = resolve(c, base);
            check_resume_config(saved, invoked);
            const LoopState state = loop_state_from_checkpoint(j);
            return run_loop(dir, invoked, &state);
        } else if (eval->parsed()) {
            const RunConfig config = resolve(c);
            persist_config(dir, config);
            const SystemSpec sys = config.system();
            const EvalProtocol protocol = config.protocol();
            MeanStd r;
            if (reference) {
                const FunctionMap truth = reference_map(sys);
                r = protocol.metric == EvalMetricKind::modal_l2 ? pde_l2_error(truth, sys, protocol)
                                                                : trajectory_mse(truth, sys, protocol);
            } else {
                if (checkpoint.empty()) throw IoError("eval needs --checkpoint (or --reference)");
                const LoopState s = loop_state_from_checkpoint(read_json(checkpoint));
                if (!s.has_models) throw IoError("checkpoint " + checkpoint + " holds no trained models");
                r = evaluate_model(s.forward, sys, protocol, &s.samples);
            }
            json per = json::array();
            for (const double v : r.per_trajectory) per.push_back(double_to_json(v));
            write_json(join(dir, "eval.json"), {{"system", sys.name},
                                                {"mean", double_to_json(r.mean)},
                                                {"std", double_to_json(r.std)},
                                                {"diverged", r.diverged},
                                                {"per_trajectory", per}});
            std::cout << fmt::format("{:.17g} {:.17g}\n", r.mean, r.std);
            if (r.diverged > 0) {
                log_line(fmt::format("{} of {} trajectories diverged", r.diverged, r.per_trajectory.size()));
                return divergence;
            }
        } else if (field->parsed()) {
            const RunConfig config = resolve(c);
            persist_config(dir, config);
            const SystemSpec sys = config.system();
            const LoopConfig lc = config.loop_config();
            const Models m = load_or_train(checkpoint, config);
            Oracle truth(sys);
            const ErrorField f =
                error_field(NetworkMap(m.forward), NetworkMap(m.backward),
                            study_grid(sys.domain, config.get_size("field.points")), lc.K,
                            config.get_bool("field.with_truth") ? &truth : nullptr, lc.threads);
            write_text(join(dir, "field.csv"), format_field(f));
            if (f.has_truth()) {
                const Correlation r = correlation(f);
                std::cout << fmt::format("pearson {:.6f} spearman {:.6f} pairs {}\n", r.pearson, r.spearman, r.used);
            }
        } else if (bounds->parsed()) {
            const RunConfig config = resolve(c);
            persist_config(dir, config);
            const Models m = load_or_train(checkpoint, config);
            const BoundReport r =
                bound_study(NetworkMap(m.forward), NetworkMap(m.backward), config.system(), config.bound_options());
            write_text(join(dir, "bounds_forward.csv"), format_bounds(r.forward));
            write_text(join(dir, "bounds_backward.csv"), format_bounds(r.backward));
            write_text(join(dir, "bounds_reciprocal.csv"), format_bounds(r.reciprocal));
            std::cout << fmt::format("c_h {:.6g} eps_f {:.6g} eps_g {:.6g} eligible {}/{} satisfied {}\n", r.params.c_h,
                                     r.params.eps_f, r.params.eps_g, r.eligible, r.test_points,
                                     r.all_satisfied() ? "all" : "not all");
        } else if (exp->parsed()) {
            const auto names = experiment_names();
            if (std::find(names.begin(), names.end(), experiment) == names.end()) {
                std::string list;
                for (const auto& n : names) list += "\n  " + n;
                std::cerr << "unknown experiment '" << experiment << "'; valid names:" << list << '\n';
                return config_error;
            }
            const RunConfig config = resolve(c, {{"system", default_system(experiment)}});
            const json report = run_experiment(experiment, config, join(dir, experiment), log_line);
            std::cout << report.at("results").dump(1) << '\n';
        }
        return ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const ResumeMismatch& e) {
        std::cerr << "resume mismatch: " << e.what() << '\n';
        return resume_mismatch;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
}
