#pragma once

#include <cstdint>
#include <vector>

#include "attnmix/common.hpp"

namespace attnmix {

// Deterministic xoshiro256** generator seeded through splitmix64.
// The sequence depends only on the seed, never on the platform; all
// distribution transforms below are fixed algorithms on top of next(),
// so every stochastic operation in the project replays bit-identically.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();

    // Unbiased-enough integer in [0, n); n must be >= 1.
    std::uint64_t next_below(std::uint64_t n);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    // Standard normal via Box-Muller (one spare cached).
    double normal();

    // Normal(0, sigma) redrawn until |x| <= 2*sigma.
    double truncated_normal(double sigma);

    // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 uses the boost
    // Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha).
    double gamma(double alpha);

    // Beta(alpha, beta) as X/(X+Y) with two gamma draws.
    double beta(double alpha, double beta);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent stream for a named purpose. Streams created
    // from the same (seed, tag) pair are identical across runs.
    static Rng derive(std::uint64_t seed, std::uint64_t tag);

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Beta(alpha, alpha) draw per the mixing-ratio contract; alpha must be > 0.
real sample_beta(Rng& rng, double alpha);

}  // namespace attnmix
