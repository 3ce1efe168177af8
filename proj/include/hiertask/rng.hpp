#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace hiertask {

/// Deterministic random source. All sampling goes through explicit
/// transformations of the raw mt19937_64 stream so sequences are stable
/// across standard libraries, which keeps run outputs reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream derived from (seed, stream); used to give each
    /// component (init, shuffle, dropout, data) its own sequence.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        return Rng(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ull)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per draw, no cached state).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Unbiased index in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % n);
    }

    /// Fisher-Yates, stable across platforms for a given seed.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

/// Fixed stream ids for component-scoped rngs. Keeping encoder/model-head
/// streams independent of the make head makes single-task and parallel
/// networks initialize identically where they share structure.
namespace rng_stream {
inline constexpr std::uint64_t encoder = 1;
inline constexpr std::uint64_t model_head = 2;
inline constexpr std::uint64_t make_head = 3;
inline constexpr std::uint64_t dropout = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t data = 6;
}  // namespace rng_stream

}  // namespace hiertask
