#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace critsamp {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for stream `stream`, element `index` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(seed) ^ stream) + index);
}

/// Named stream identifiers so that callers never share a sequence by accident.
namespace streams {
inline constexpr std::uint64_t initial_set = 0x1001;
inline constexpr std::uint64_t augment = 0x1002;
inline constexpr std::uint64_t init_forward = 0x1003;
inline constexpr std::uint64_t init_backward = 0x1004;
inline constexpr std::uint64_t init_spatial = 0x1005;
inline constexpr std::uint64_t shuffle = 0x1006;
inline constexpr std::uint64_t consistency = 0x1007;
inline constexpr std::uint64_t evaluation = 0x1008;
inline constexpr std::uint64_t grid = 0x1009;
inline constexpr std::uint64_t lipschitz = 0x100a;
}  // namespace streams

/// Deterministic RNG. Conversions to doubles and bounded integers are done here
/// rather than through <random> distributions so sequences are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore(const std::string& text) {
        std::istringstream is(text);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace critsamp
