#pragma once

#include <cstdint>
#include <random>

namespace plf {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mix a base seed with stream coordinates (member index, sample index, ...)
/// so independent substreams are reproducible regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(base);
    s = splitmix64(s ^ (a + 0x632be59bd9b4e019ULL));
    s = splitmix64(s ^ (b + 0x9e6c63d0876a9a47ULL));
    return s;
}

/// Seeded generator with the distribution helpers used across the library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double std = 1.0) {
        return std::normal_distribution<double>(mean, std)(engine_);
    }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace plf
