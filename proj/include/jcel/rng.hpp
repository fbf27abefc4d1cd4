#pragma once

#include <cstdint>
#include <random>

#include "jcel/types.hpp"

namespace jcel {

// Identifies which consumer a random stream belongs to, so that adding draws
// in one module never shifts the sequence seen by another.
enum class StreamId : std::uint64_t {
    noise = 1,
    gains = 2,
    test = 99,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Random stream keyed by (seed, trial, module). Streams with different keys
/// are statistically independent; equal keys reproduce bit-identical draws.
class Rng {
public:
    explicit Rng(std::uint64_t key) : engine_(key) {}

    static Rng stream(std::uint64_t seed, std::uint64_t trial, StreamId id) {
        std::uint64_t key = splitmix64(seed);
        key = splitmix64(key ^ trial);
        key = splitmix64(key ^ static_cast<std::uint64_t>(id));
        return Rng(key);
    }

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

    // Circular complex Gaussian with E|w|^2 = variance.
    Complex complex_normal(double variance) {
        const double s = std::sqrt(variance / 2.0);
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {s * re, s * im};
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace jcel
