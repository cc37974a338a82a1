#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace arq {

enum class VariateClass : std::uint64_t { Arrival = 0, Service = 1 };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// One independent random stream, keyed by (master seed, node, variate class).
/// Streams never share draws, so adding nodes or variate classes to a
/// simulation leaves every existing stream untouched.
class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, int node, VariateClass variate)
        : engine_(derive_seed(master_seed, node, variate)) {}

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exponential variate with the given mean, by inversion.
    double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

private:
    static std::uint64_t derive_seed(std::uint64_t master_seed, int node, VariateClass variate) {
        std::uint64_t state = master_seed;
        (void)detail::splitmix64(state);
        state ^= 0x6A09E667F3BCC909ULL * (static_cast<std::uint64_t>(node) + 1);
        (void)detail::splitmix64(state);
        state ^= 0xBB67AE8584CAA73BULL * (static_cast<std::uint64_t>(variate) + 1);
        return detail::splitmix64(state);
    }

    std::mt19937_64 engine_;
};

}  // namespace arq
