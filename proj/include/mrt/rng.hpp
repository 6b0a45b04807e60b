#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mrt {

// Seeded random stream. Identical seed and identical draw sequence give
// identical values within one build.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t position() const noexcept { return position_; }

    double uniform(double lo = 0.0, double hi = 1.0) {
        ++position_;
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        ++position_;
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    // Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        ++position_;
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    bool bernoulli(double p) {
        ++position_;
        return std::bernoulli_distribution(p)(engine_);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

    // Child stream whose seed is a deterministic function of this seed and a tag.
    Rng derive(std::string_view tag) const { return Rng(mix(seed_, tag)); }

    static std::uint64_t mix(std::uint64_t seed, std::string_view tag) {
        // FNV-1a over the tag, folded with the seed through splitmix64.
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL + h;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace mrt
