#pragma once

#include <cstdint>

namespace avatar {

// splitmix64; used to derive per-host per-round streams from one trial seed
// so simulations are reproducible regardless of host iteration order.
struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d4a4f27d1e3b5full;
        return z ^ (z >> 31);
    }

    // Unbiased-enough for protocol coin flips and small ranges.
    std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

    bool coin() { return (next() & 1) != 0; }
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(seed ^ (a * 0x9e3779b97f4a7c15ull) ^ (b * 0xc2b2ae3d27d4eb4full));
    g.next();
    return g.next();
}

}  // namespace avatar
