#pragma once

// Deterministic seed derivation.  Every randomized component (sample points,
// diffusion paths, test polynomials) derives its own substream seed from a
// master seed, a purpose tag and an index, so results are reproducible and
// independent of thread scheduling.

#include <cstdint>
#include <string>

namespace folib {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a_64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Substream seed for (master seed, purpose tag, element index).
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag,
                                 std::uint64_t index) {
    return splitmix64(splitmix64(master ^ fnv1a_64(tag)) + index);
}

} // namespace folib
