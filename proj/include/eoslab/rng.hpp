#pragma once

// Counter-based 64-bit generator with an explicit, platform-independent
// definition:
//
//   base      = mix(seed ^ mix(stream_id + 0x9E3779B97F4A7C15))
//   u64(k)    = mix(base + (k + 1) * 0x9E3779B97F4A7C15)
//   mix(x)    = SplitMix64 finalizer (Stafford variant 13)
//
// Uniforms use the top 53 bits. Normals use the Box-Muller transform on
// consecutive uniform pairs, returning the cosine branch first and the sine
// branch second.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace eoslab {

struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    friend bool operator==(const RngSpec&, const RngSpec&) = default;
};

[[nodiscard]] constexpr std::uint64_t splitmix64_mix(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

class Rng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit constexpr Rng(RngSpec spec) noexcept
        : base_(splitmix64_mix(spec.seed ^ splitmix64_mix(spec.stream_id + kGamma))) {}

    constexpr std::uint64_t next_u64() noexcept {
        ++counter_;
        return splitmix64_mix(base_ + counter_ * kGamma);
    }

    /// Uniform on (0, 1].
    double uniform() noexcept {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phase = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phase);
        has_spare_ = true;
        return r * std::cos(phase);
    }

    double normal(double sigma) noexcept { return sigma * normal(); }

    [[nodiscard]] std::uint64_t draws() const noexcept { return counter_; }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace eoslab
