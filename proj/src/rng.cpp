#include "a3m/rng.hpp"

namespace a3m {

std::size_t Rng::index(std::size_t n)
{
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

Rng Rng::fork(std::uint64_t salt) const
{
    Rng mixer(state_ ^ (salt * 0xd1b54a32d192ed03ULL));
    return Rng(mixer.next_u64());
}

} // namespace a3m
