#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qflow {

using Rng = std::mt19937_64;

// splitmix64; used to derive independent stream seeds from a master seed so
// parallel work stays deterministic regardless of thread count.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(master ^ (a * 0x9e3779b97f4a7c15ULL)) ^ b);
}

// Normal(mean, variance) restricted to [lo, hi] via rejection sampling.
struct TruncNormal {
    double mean = 0.0;
    double variance = 1.0;
    double lo = 0.0;
    double hi = 1.0;

    double sample(Rng& rng) const {
        if (variance <= 0.0) {
            double x = mean;
            if (x < lo) x = lo;
            if (x > hi) x = hi;
            return x;
        }
        std::normal_distribution<double> dist(mean, std::sqrt(variance));
        for (;;) {
            const double x = dist(rng);
            if (x >= lo && x <= hi) return x;
        }
    }
};

// Symmetric Dirichlet(alpha) over n components.
inline std::vector<double> dirichlet(Rng& rng, int n, double alpha) {
    std::vector<double> w(static_cast<std::size_t>(n));
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    std::gamma_distribution<double> g(alpha, 1.0);
    double sum = 0.0;
    for (auto& x : w) {
        x = g(rng);
        sum += x;
    }
    if (sum <= 0.0) {
        // all-zero draw is possible only by severe underflow; fall back to uniform
        for (auto& x : w) x = 1.0 / n;
        return w;
    }
    for (auto& x : w) x /= sum;
    return w;
}

}  // namespace qflow
