#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sfm {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Deterministic random stream. Variates are derived from raw mt19937_64
/// words by fixed formulas (not the implementation-defined std
/// distributions), so sequences are reproducible across platforms.
/// `fork` derives an independent stream from (seed, tag) only, so the
/// child stream does not depend on how much the parent has consumed.
class Rng {
public:
    explicit Rng(uint64_t seed)
        : seed_(seed), gen_(detail::splitmix64(seed)), spare_(0), has_spare_(false) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    /// Standard normal (Box-Muller, spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Exp(1).
    double exponential() { return -std::log(uniform_pos()); }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(uniform() * static_cast<double>(n)) % n;
    }

    Rng fork(uint64_t tag) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(tag + 0x51eed5eedull)));
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    double spare_;
    bool has_spare_;
};

}  // namespace sfm
