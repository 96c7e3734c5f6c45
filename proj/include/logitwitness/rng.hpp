#pragma once

// Counter-based 64-bit generator.
//
// Every draw is a pure function of (key, counter): output_k = mix(key + k * G)
// with the SplitMix64 finalizer as mix. A stream is selected by deriving the
// key from (seed, stream id), so passage i of a Monte Carlo run always sees
// the same numbers regardless of how work is scheduled.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace lw {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class CounterRng {
public:
    using result_type = std::uint64_t;

    static constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

    explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(splitmix64_mix(seed ^ splitmix64_mix(stream + golden))) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        return splitmix64_mix(key_ + (++counter_) * golden);
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    // Standard normal by Box-Muller; the second variate is discarded so the
    // stream position stays a simple function of the number of draws.
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace lw
