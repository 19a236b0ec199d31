#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace coagulab {

// Philox4x32-10 counter-based generator.
//
// The 64-bit seed is the Philox key and the 128-bit counter is split into a
// 64-bit block index (low words) and a 64-bit stream id (high words), so any
// (seed, stream) pair names an independent, randomly addressable sequence.
class CounterRng
{
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
        , stream_(stream)
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        if (cursor_ == 2)
        {
            refill();
        }
        const auto lo = buffer_[2 * cursor_];
        const auto hi = buffer_[2 * cursor_ + 1];
        ++cursor_;
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Exp(1) by inverse CDF; finite because uniform() < 1.
    double exponential() noexcept { return -std::log1p(-uniform()); }

    std::uint64_t seed() const noexcept { return (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0]; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t blocks_used() const noexcept { return block_; }

    static Block philox(Block ctr, Key key) noexcept
    {
        constexpr std::uint32_t m0 = 0xD2511F53u;
        constexpr std::uint32_t m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u;
        constexpr std::uint32_t w1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round)
        {
            const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += w0;
            key[1] += w1;
        }
        return ctr;
    }

private:
    void refill() noexcept
    {
        const Block ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = philox(ctr, key_);
        ++block_;
        cursor_ = 0;
    }

    Key key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Block buffer_{};
    int cursor_ = 2;
};

// Bijective 64-bit finalizer (splitmix64).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

// Per-replica seed. For a fixed master seed the map is injective in
// (replica, n) as long as both fit in 32 bits; for fixed (replica, n) it is
// injective in the master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint32_t replica, std::uint32_t n) noexcept
{
    const std::uint64_t packed = (static_cast<std::uint64_t>(replica) << 32) | n;
    return mix64(master_seed ^ mix64(packed));
}

} // namespace coagulab
