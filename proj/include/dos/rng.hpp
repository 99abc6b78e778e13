#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "dos/errors.hpp"

namespace dos {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

// Deterministic seeded generator.  All stochastic decisions in the library
// go through this class so that a (seed, call sequence) pair pins every
// result bit-exactly.  Distribution transforms are implemented here rather
// than with std::*_distribution, whose output is not pinned by the standard
// across library versions.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        // log argument kept away from 0: 1-u1 is in (0, 1].
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Unit-rate exponential.
    double exponential() { return -std::log1p(-uniform01()); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw ArgumentError("uniform_below: n must be positive");
        if (n == 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates shuffle, fixed iteration order.
    template <typename Vec>
    void shuffle(Vec& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // Independent stream keyed off the base seed (not current state), so
    // derivation order is irrelevant to the result.
    SeededRng derive(std::uint64_t a, std::uint64_t b = 0) const {
        std::uint64_t h = detail::splitmix64(seed_ ^ (0x9E3779B97F4A7C15ULL * (a + 1)));
        h = detail::splitmix64(h ^ (0xC2B2AE3D27D4EB4FULL * (b + 1)));
        return SeededRng(h);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace dos
