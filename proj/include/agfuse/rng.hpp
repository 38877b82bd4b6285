#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace agfuse {

/// Counter-based 64-bit generator: output i is splitmix64's finalizer applied
/// to (key + i * golden gamma). Streams are derived by hashing (seed, stream
/// ids) into the key, so every consumer gets an independent, order-free
/// sequence. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    static constexpr const char* kName = "splitmix64-counter";

    explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x243f6a8885a308d3ULL)) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(mix(seed ^ 0x243f6a8885a308d3ULL) + mix(stream + 0x13198a2e03707344ULL))) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub)
        : CounterRng(CounterRng(seed, stream).key_, sub) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n > 0, by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v = (*this)();
        while (v >= limit) v = (*this)();
        return v % n;
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t counter() const { return counter_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// In-place Fisher-Yates shuffle driven by a CounterRng.
template <typename Vec>
void shuffle(Vec& v, CounterRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace agfuse
