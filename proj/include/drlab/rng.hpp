#pragma once
// Counter-keyed splitmix64 streams.  Every Monte Carlo sample i of a run with
// seed s draws from stream_for(s, i), so the value of sample i depends only
// on (s, i) and never on scheduling -- the basis of the bit-identical
// reproducibility guarantee across worker counts.

#include <cstdint>

namespace drlab {

struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1) with 53 random bits
    double uniform01() { return double(next() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// per-sample stream: hash the index to a pseudo-random position of the
// splitmix orbit so consecutive indices don't yield overlapping sequences
inline SplitMix64 stream_for(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64{mix64(seed ^ mix64(index * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull))};
}

}  // namespace drlab
