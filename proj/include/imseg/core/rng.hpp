#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace imseg {

/// Counter-based generator: output k of stream (seed, stream) is a pure
/// hash of the triple, so draws are reproducible on any platform and a
/// sub-stream can be derived without advancing the parent.
class Rng {
  public:
    constexpr Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : seed_(seed), stream_(stream) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Stateless draw at an explicit counter.
    constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
        return mix(seed_ ^ mix(stream_ ^ mix(counter * 0xd1b54a32d192ed03ULL)));
    }

    constexpr std::uint64_t next_u64() noexcept { return at(counter_++); }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (consumes two draws, no caching).
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300)
            u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Independent child stream; the parent is not advanced.
    constexpr Rng fork(std::uint64_t sub) const noexcept {
        return Rng(seed_, mix(stream_ + 0x632be59bd9b4e019ULL * (sub + 1)));
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t stream() const noexcept { return stream_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by Rng (std::shuffle is implementation-defined).
template <class Container>
void shuffle(Container& c, Rng& rng) {
    for (std::size_t i = c.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        using std::swap;
        swap(c[i - 1], c[j]);
    }
}

} // namespace imseg
