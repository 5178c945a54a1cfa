#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace latdim {

// Seed plumbing. Every randomized routine takes an explicit 64-bit seed and
// derives independent substreams with mix_seed, so results depend only on the
// seeds passed in, never on call order or scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(splitmix64(seed) ^ tag);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// mt19937_64 with hand-rolled output conversions; std::*_distribution is not
// pinned by the standard, these are.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    double exponential() { return -std::log(1.0 - uniform()); }

    // Flat Dirichlet draw over k states. min_mass > 0 clamps every entry away
    // from zero and renormalizes (needed where analytic derivatives divide by
    // the entries).
    std::vector<double> simplex(int k, double min_mass = 0.0) {
        std::vector<double> v(static_cast<std::size_t>(k));
        double sum = 0.0;
        for (auto& x : v) {
            x = exponential();
            sum += x;
        }
        for (auto& x : v) x /= sum;
        if (min_mass > 0.0) {
            double s = 0.0;
            for (auto& x : v) {
                if (x < min_mass) x = min_mass;
                s += x;
            }
            for (auto& x : v) x /= s;
        }
        return v;
    }

    // Inverse-CDF draw from an unnormalized nonnegative weight column.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace latdim
