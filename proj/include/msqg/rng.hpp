#pragma once
/**
 * @file rng.hpp
 * @brief Counter-based random streams for reproducible Monte Carlo.
 *
 * Every random number is a pure function of (master seed, stream id, counter),
 * so trajectories are bit-reproducible regardless of worker count or thread
 * scheduling. The generator is a Philox-2x64 with 10 rounds; normals come from
 * Box-Muller on the two 64-bit lanes, never from std:: distributions (whose
 * output is implementation-defined).
 */

#include <cmath>
#include <cstdint>

namespace msqg {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline void mul_hilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace detail

/// Philox-2x64-10 block: two 64-bit words out of a (key, counter) pair.
struct PhiloxBlock {
    std::uint64_t w0;
    std::uint64_t w1;
};

inline PhiloxBlock philox2x64(std::uint64_t key, std::uint64_t ctr0, std::uint64_t ctr1) {
    constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ULL;
    constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;
    std::uint64_t x0 = ctr0, x1 = ctr1, k = key;
    for (int round = 0; round < 10; ++round) {
        std::uint64_t hi, lo;
        detail::mul_hilo64(x0, kMul, hi, lo);
        x0 = hi ^ k ^ x1;
        x1 = lo;
        k += kWeyl;
    }
    return {x0, x1};
}

/// Uniform double in [0, 1) from the top 53 bits of a word.
inline double u64_to_unit(std::uint64_t w) { return static_cast<double>(w >> 11) * 0x1.0p-53; }

/// A keyed random stream addressed purely by counters.
class CounterRng {
public:
    CounterRng() = default;
    /// Derives an independent key from (master seed, stream id).
    CounterRng(std::uint64_t master_seed, std::uint64_t stream)
        : key_(detail::splitmix64(detail::splitmix64(master_seed) ^
                                  detail::splitmix64(stream * 0xA0761D6478BD642FULL + 0xE7037ED1A0B428DBULL))) {}

    std::uint64_t key() const { return key_; }

    /// Two independent uniforms in [0,1) for the given 128-bit counter.
    void uniform_pair(std::uint64_t ctr0, std::uint64_t ctr1, double& u0, double& u1) const {
        const PhiloxBlock b = philox2x64(key_, ctr0, ctr1);
        u0 = u64_to_unit(b.w0);
        u1 = u64_to_unit(b.w1);
    }

    double uniform(std::uint64_t ctr0, std::uint64_t ctr1 = 0) const {
        double u0, u1;
        uniform_pair(ctr0, ctr1, u0, u1);
        return u0;
    }

    /// Standard normal pair via Box-Muller; (0,0) counter input is fine.
    void normal_pair(std::uint64_t ctr0, std::uint64_t ctr1, double& n0, double& n1) const {
        double u0, u1;
        uniform_pair(ctr0, ctr1, u0, u1);
        // Shift u0 away from zero so log() is safe; 2^-53 bias is negligible.
        const double r = std::sqrt(-2.0 * std::log(1.0 - u0));
        const double a = 6.283185307179586476925286766559 * u1;
        n0 = r * std::cos(a);
        n1 = r * std::sin(a);
    }

    /// One standard normal addressed by (step, channel) - the per-step,
    /// per-mode Brownian increment derivation used by the integrators.
    double normal_at(std::uint64_t step, std::uint64_t channel) const {
        double n0, n1;
        normal_pair(step, channel, n0, n1);
        return n0;
    }

private:
    std::uint64_t key_{0};
};

}  // namespace msqg
