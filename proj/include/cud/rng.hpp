// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cud {

// splitmix64; used to derive independent sub-streams from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG with a pinned draw discipline: uniform() consumes one
// mt19937_64 word, normal() consumes exactly two (Box-Muller, no cache),
// index() consumes one. Tests that replay a stream rely on these counts.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Unbiased-enough fixed-cost index draw (128-bit multiply).
    std::int64_t index(std::int64_t n) {
        const unsigned __int128 m = static_cast<unsigned __int128>(gen_()) * static_cast<unsigned __int128>(n);
        return static_cast<std::int64_t>(m >> 64);
    }

    void fill_normal(double* out, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = normal();
    }

    void fill_normal(std::vector<double>& out) { fill_normal(out.data(), static_cast<std::int64_t>(out.size())); }

private:
    std::mt19937_64 gen_;
};

}  // namespace cud
