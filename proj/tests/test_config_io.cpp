#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "critsamp/config.hpp"
#include "critsamp/io.hpp"

using namespace critsamp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("critsamp_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

LoopConfig tiny(const RunConfig& c) {
    LoopConfig l = c.loop_config();
    l.train.epochs = 5;
    l.augment_cap = 200;
    return l;
}

}  // namespace

TEST_CASE("configuration defaults and overrides") {
    const RunConfig p = RunConfig::defaults("pendulum");
    CHECK(p.get("sampler.J0") == "100");
    CHECK(p.get("sampler.K") == "5");
    CHECK(p.loop_config().batch_per_iter == 36);
    CHECK(p.protocol().horizon == 20.0);
    CHECK(RunConfig::defaults("lorenz").loop_config().J0 == 500);
    CHECK(RunConfig::defaults("burgers").loop_config().spatial.order == 1);

    const RunConfig r = RunConfig::resolve({{"system", "pendulum"}, {"sampler.K", "3"}, {"system", "nonlinear"},
                                            {"sampler.K", "7"}});
    CHECK(r.get("system") == "nonlinear");
    CHECK(r.loop_config().K == 7);
    CHECK(r.protocol().horizon == 10.0);

    CHECK_THROWS_AS(RunConfig::resolve({{"sampler.KK", "3"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::resolve({{"sampler.K", "three"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::resolve({{"system", "double-pendulum"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::resolve({{"sampler.stop_mode", "sometime"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::resolve({{"sampler.budget", "50"}}), ConfigError);
}

TEST_CASE("configuration text round trip") {
    const auto parsed = RunConfig::parse("# comment\n\nsystem = lorenz\nsampler.K=3\n  seed=42  \n");
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0] == Assignment{"system", "lorenz"});
    CHECK(parsed[2] == Assignment{"seed", "42"});
    const RunConfig c = RunConfig::resolve(parsed);
    CHECK(RunConfig::resolve(RunConfig::parse(c.serialize())) == c);
    CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), ConfigError);

    const auto keys = RunConfig::known_keys();
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(keys.size() == c.values().size());
}

TEST_CASE("seed lists and runtime keys") {
    const RunConfig c = RunConfig::resolve({{"experiment.seeds", "1,2, 3"}});
    CHECK(c.seed_list() == std::vector<std::uint64_t>{1, 2, 3});
    CHECK_THROWS_AS(RunConfig::resolve({{"experiment.seeds", "1,x"}}), ConfigError);
    CHECK(is_runtime_key("threads"));
    CHECK(is_runtime_key("run.stop_after"));
    CHECK_FALSE(is_runtime_key("seed"));
}

TEST_CASE("sample files round-trip bitwise") {
    const SystemSpec sys = systems::pendulum();
    Oracle oracle(sys);
    SampleSet S = generate_initial_set(oracle, 25, 9);
    S.pairs.push_back(oracle.query(State{0.1, -0.2}, Provenance::oracle_critical));
    S.pairs.push_back({State{1.0 / 3.0, 1e-300}, State{-0.0, 5e-324}, Provenance::augmented});
    const std::string text = format_samples(S, sys);
    const SampleFile f = parse_samples(text);
    CHECK(f.samples.pairs == S.pairs);
    CHECK(f.dim == 2);
    CHECK(f.delta == sys.delta);
    CHECK(f.system == "pendulum");
    CHECK(std::signbit(f.samples.pairs.back().u1[0]));

    const fs::path dir = scratch("samples");
    write_samples((dir / "s.csv").string(), S, sys);
    CHECK(read_samples((dir / "s.csv").string()).samples.pairs == S.pairs);
    CHECK_THROWS_AS(parse_samples("2,0.1,pendulum\noracle-initial,1,2,3\n"), IoError);
    CHECK_THROWS_AS(read_samples((dir / "missing.csv").string()), IoError);
}

TEST_CASE("non-finite numbers in JSON") {
    CHECK(double_from_json(double_to_json(INFINITY)) == INFINITY);
    CHECK(double_from_json(double_to_json(-INFINITY)) == -INFINITY);
    CHECK(std::isnan(double_from_json(double_to_json(NAN))));
    CHECK(double_from_json(double_to_json(0.1)) == 0.1);
}

TEST_CASE("models and loop state round-trip through JSON") {
    const RunConfig c = RunConfig::defaults("pendulum");
    const SystemSpec sys = c.system();
    Oracle oracle(sys);
    const SampleSet S = generate_initial_set(oracle, 40, 2);
    const TrainedModels m = train_round(sys, S, tiny(c), 0, nullptr);

    const auto j = to_json(m.forward);
    CHECK(evolution_from_json(j) == m.forward);
    CHECK(evolution_from_json(nlohmann::json::parse(j.dump())) == m.forward);
    CHECK(evolution_from_json(to_json(m.backward)).direction == Direction::backward);
    CHECK(spatial_from_json(nlohmann::json::parse(to_json(m.spatial).dump())) == m.spatial);
    CHECK(samples_from_json(to_json(m.augmented)) == m.augmented);
    CHECK_THROWS(evolution_from_json(to_json(m.spatial)));

    LoopConfig l = tiny(c);
    l.J0 = 40;
    l.budget = 76;
    const LoopState s = critical_sampling_loop(sys, l);
    const RunConfig saved = RunConfig::resolve({{"sampler.J0", "40"}, {"sampler.budget", "76"}});
    const auto cp = nlohmann::json::parse(loop_checkpoint(s, saved).dump());
    const LoopState back = loop_state_from_checkpoint(cp);
    CHECK(back.samples == s.samples);
    CHECK(back.forward == s.forward);
    CHECK(back.backward == s.backward);
    CHECK(back.spatial == s.spatial);
    CHECK(back.next_iteration == s.next_iteration);
    CHECK(back.finished == s.finished);
    CHECK(back.oracle_calls == s.oracle_calls);
    REQUIRE(back.history.size() == s.history.size());
    for (std::size_t i = 0; i < s.history.size(); ++i) {
        CHECK(back.history[i].mean_recip == s.history[i].mean_recip);
        CHECK(back.history[i].seconds == s.history[i].seconds);
    }
    CHECK(config_from_checkpoint(cp) == saved);
    CHECK(cp.at("rng").at("next_iteration") == s.next_iteration);
}

TEST_CASE("resume refuses a different configuration") {
    const RunConfig a = RunConfig::resolve({{"sampler.K", "5"}});
    check_resume_config(a, RunConfig::resolve({{"threads", "8"}, {"run.stop_after", "2"}}));
    CHECK_THROWS_AS(check_resume_config(a, RunConfig::resolve({{"sampler.K", "3"}})), ResumeMismatch);
    CHECK_THROWS_AS(check_resume_config(a, RunConfig::resolve({{"system", "nonlinear"}})), ResumeMismatch);
}

TEST_CASE("columnar exports") {
    ErrorField f;
    f.dim = 2;
    f.points = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    f.reciprocal = {0.1, INFINITY, 0.3};
    const std::string field = format_field(f);
    CHECK(std::count(field.begin(), field.end(), '\n') == 4);
    CHECK(field.rfind("x_1,x_2,recip,truth\n", 0) == 0);
    CHECK(field.find("inf") != std::string::npos);

    HistoryRow r;
    r.samples = 100;
    const std::string h = format_history({r, r});
    CHECK(h.rfind("iteration,J_m,mean_recip,max_recip,infinite,eval_error,grid_truth,oracle_calls,eval_calls,seconds\n", 0) == 0);
    CHECK(std::count(h.begin(), h.end(), '\n') == 3);

    const std::string b = format_bounds({BoundRow{0, 0.0, 0.1, true}, BoundRow{1, 0.2, 0.1, false}});
    CHECK(b == "k,empirical,bound,satisfied\n0,0,0.10000000000000001,1\n1,0.20000000000000001,0.10000000000000001,0\n");
}

TEST_CASE("files are replaced atomically") {
    const fs::path dir = scratch("atomic");
    const std::string p = (dir / "x.json").string();
    write_json(p, {{"a", 1}});
    write_json(p, {{"a", 2}});
    CHECK(read_json(p).at("a") == 2);
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().filename() == "x.json");
    CHECK_THROWS_AS(read_json((dir / "nope.json").string()), IoError);
}
