#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace ergo {

/// Counter-free seed derivation. splitmix64 is the usual mixer for this:
/// absorbing a tag into the state and finalizing gives independent streams
/// for (master, role, indices) tuples without any coordination.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t absorb(std::uint64_t state, std::uint64_t tag) {
    return mix64(state ^ (tag + 0x9e3779b97f4a7c15ull));
}

inline std::uint64_t absorb(std::uint64_t state, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return absorb(state, h);
}

/// Child seed for (master seed, role, i, j). Replica seeds are derived from
/// indices, never from execution order, so parallel runs stay reproducible.
inline std::uint64_t split_seed(std::uint64_t master, std::string_view role,
                                std::uint64_t i = 0, std::uint64_t j = 0) {
    std::uint64_t s = mix64(master);
    s = absorb(s, role);
    s = absorb(s, i);
    s = absorb(s, j);
    return s;
}

/// mt19937_64 core (bit-exact across platforms by the standard) with
/// explicit variate transforms; std::*_distribution is implementation
/// defined and would break byte-level reproducibility of reports.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    /// Uniform on [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller; caches the companion variate.
    double normal() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        have_cache_ = true;
        return r * std::cos(a);
    }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection to kill modulo bias
        std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = eng_();
        while (x >= lim) x = eng_();
        return x % n;
    }

private:
    std::mt19937_64 eng_;
    double cache_ = 0.0;
    bool have_cache_ = false;
};

}  // namespace ergo
