#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pcnet {

/// Counter-based SplitMix64 generator.
///
/// The n-th output of stream `key` is mix64(key + n * 0x9E3779B97F4A7C15),
/// so any draw is addressable without replaying earlier ones and results are
/// identical on every platform. fork() derives an independent stream, which
/// is how per-image and per-restart randomness is keyed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

    static std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++counter_;
        return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    /// Uniform in the open interval (0,1).
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return r % n;
    }
    /// Standard normal by Box-Muller; one draw per call.
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent stream keyed by (this stream, id).
    Rng fork(std::uint64_t id) const { return Rng(key_, mix64(id + 0xD1B54A32D192ED03ULL)); }

    std::uint64_t key() const { return key_; }

private:
    Rng(std::uint64_t parent_key, std::uint64_t salt) : key_(mix64(parent_key ^ salt)) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace pcnet
