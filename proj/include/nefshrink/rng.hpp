#pragma once

#include <cstdint>
#include <random>

namespace nefshrink {

// Stream purposes for per-(replication, purpose) seed derivation.
enum class StreamPurpose : std::uint64_t {
    Theta = 1,
    Sample = 2,
    SupGap = 3,
    Tau = 4,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Order-independent child seed: a pure function of its inputs.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ splitmix64(b + 0x85157AF5ULL));
    h = splitmix64(h ^ splitmix64(c + 0x2545F4914F6CDD1DULL));
    return h;
}

using Engine = std::mt19937_64;

}  // namespace nefshrink
