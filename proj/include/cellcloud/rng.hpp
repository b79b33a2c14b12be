#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cellcloud {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so results do not depend on call order or thread
// scheduling and are identical on every platform (integer arithmetic only).
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
    const std::uint64_t key = mix64(mix64(seed) ^ (stream * 0xD1B54A32D192ED03ull));
    return mix64(key + counter * 0x9E3779B97F4A7C15ull);
}

// [0, 1) with 53 random bits.
inline constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class RngStream {
public:
    constexpr RngStream(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

    constexpr std::uint64_t next_u64() noexcept { return counter_draw(seed_, stream_, counter_++); }
    constexpr double uniform() noexcept { return to_unit(next_u64()); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n > 0. Rejection keeps it unbiased.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        for (;;) {
            const auto v = next_u64();
            if (v < limit) return v % n;
        }
    }

    // Box-Muller; one normal per two uniforms.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double exponential(double rate) noexcept { return -std::log(1.0 - uniform()) / rate; }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace cellcloud
