#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sga {

// Deterministic, platform-independent random stream (splitmix64 based).
// All randomness in the project flows through this type so that a run is
// reproducible bit-for-bit from its master seed. Named sub-streams keep
// unrelated consumers (data generation, init, dropout, transforms, stream
// order) from perturbing each other when one of them draws more values.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        int v = static_cast<int>(uniform() * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }

    // Standard normal via Box-Muller. Stateless between calls (no cached pair).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Named sub-stream seed, e.g. derive_seed(master, "transforms").
inline uint64_t derive_seed(uint64_t master, std::string_view stream) {
    return mix64(master ^ fnv1a64(stream));
}

// Indexed sub-stream seed, e.g. one per dataset sample.
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
    return mix64(master ^ (0xD1B54A32D192ED03ull * (index + 1)));
}

}  // namespace sga
