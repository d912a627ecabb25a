#include "attnmix/rng.hpp"

#include <cmath>

namespace attnmix {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed;
    std::uint64_t mixed = splitmix64(s) ^ (tag * 0x9e3779b97f4a7c15ULL);
    return Rng(mixed);
}

std::uint64_t Rng::next() {
    std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    check(n >= 1, "Rng::next_below: n must be >= 1");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
}

double Rng::uniform01() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::truncated_normal(double sigma) {
    for (;;) {
        double x = normal() * sigma;
        if (std::abs(x) <= 2.0 * sigma) return x;
    }
}

double Rng::gamma(double alpha) {
    check(alpha > 0.0, "Rng::gamma: alpha must be > 0");
    if (alpha < 1.0) {
        double u = uniform01();
        while (u <= 0.0) u = uniform01();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta(double alpha, double beta) {
    double x = gamma(alpha);
    double y = gamma(beta);
    double sum = x + y;
    if (sum <= 0.0) return 0.5;
    return x / sum;
}

std::vector<int> Rng::permutation(int n) {
    check(n >= 1, "Rng::permutation: n must be >= 1");
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
}

real sample_beta(Rng& rng, double alpha) {
    check(alpha > 0.0, "sample_beta: alpha must be > 0");
    double v = rng.beta(alpha, alpha);
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<real>(v);
}

}  // namespace attnmix
