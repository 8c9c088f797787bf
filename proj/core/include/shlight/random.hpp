#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "shlight/geometry.hpp"

namespace shlight {

// FNV-1a, used as the stable per-stream seed derivation. Fixed here so that
// manifests regenerate identically across platforms and library versions.
inline std::uint64_t stable_hash64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    std::uint64_t h = stable_hash64(stream);
    // splitmix64 finalizer over the combined state
    std::uint64_t x = master ^ (h + 0x9e3779b97f4a7c15ull);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded generator producing canonical doubles directly from the raw 64-bit
// stream; distributions are hand-rolled so sequences do not depend on the
// standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    Direction uniform_sphere() {
        double y = 1.0 - 2.0 * uniform();
        double s = std::sqrt(std::max(0.0, 1.0 - y * y));
        double phi = 2.0 * kPi * uniform() - kPi;
        return {s * std::cos(phi), y, s * std::sin(phi)};
    }

    // Fisher-Yates over indices [0, n).
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace shlight
