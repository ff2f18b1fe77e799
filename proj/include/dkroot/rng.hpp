#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dkroot {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace detail

// Deterministic stream with label-splitting: split(k) derives an independent
// stream from the *original* seed, so per-sample seeds do not depend on how
// much of the parent stream was consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(detail::splitmix64(seed)) {}

    Rng split(std::uint64_t label) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(label + 0x51ED270B7A14FULL)));
    }

    std::uint64_t raw() { return eng_(); }

    // [0, 1)
    double uniform() {
        return double(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    long uniform_int(long lo, long hi) {
        std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + long(eng_() % span);
    }

    // Box-Muller; no spare caching so the draw sequence is position-independent.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace dkroot
