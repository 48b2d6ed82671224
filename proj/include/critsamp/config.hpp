#pragma once

// Flat, namespaced key=value run configuration. Every key has a system-dependent
// default; unknown keys are rejected. The resolved form is what runs persist.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "critsamp/bounds.hpp"
#include "critsamp/evalbench.hpp"
#include "critsamp/sampler.hpp"

namespace critsamp {

using Assignment = std::pair<std::string, std::string>;

class RunConfig {
public:
    /// Defaults for the named built-in system.
    static RunConfig defaults(const std::string& system);

    /// Defaults for the last `system` assignment (pendulum if none), then every
    /// assignment in order. Throws ConfigError on unknown keys or bad values.
    static RunConfig resolve(const std::vector<Assignment>& assignments);

    /// key=value lines; blank lines and lines starting with '#' are ignored.
    static std::vector<Assignment> parse(const std::string& text);
    static std::vector<Assignment> parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    /// Sorted key=value lines; parse(serialize()) resolves to an equal config.
    std::string serialize() const;

    SystemSpec system() const;
    LoopConfig loop_config() const;
    EvalProtocol protocol() const;
    BoundStudyOptions bound_options() const;

    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    /// experiment.seeds as a list.
    std::vector<std::uint64_t> seed_list() const;

    bool operator==(const RunConfig&) const = default;

    /// All recognised keys, sorted.
    static std::vector<std::string> known_keys();

private:
    std::map<std::string, std::string> values_;
};

/// Keys that do not change the computation (threads, output settings); ignored
/// when a resume compares configurations.
bool is_runtime_key(const std::string& key);

}  // namespace critsamp
