#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace a3m {

/// splitmix64. Every draw is defined by integer arithmetic so sequences are
/// identical across compilers and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64()
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive.
    std::size_t index(std::size_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Independent stream derived from this generator's seed and `salt`.
    Rng fork(std::uint64_t salt) const;

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

} // namespace a3m
