#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace epictrl {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Maps (key, counter) to four 32-bit words with no internal state.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// splitmix64 finalizer; used to derive stream ids from structured indices.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Standard normal sequence for one (seed, stream_id) pair.
///
/// The k-th sample is a pure function of (seed, stream_id, k): block k/2 of the Philox
/// output feeds one Box-Muller transform producing samples 2*(k/2) and 2*(k/2)+1.
/// Sequential reads through next() cache the second half of each block.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_id_(stream_id) {}

    /// Sample `k` of the sequence, independent of any previous calls.
    double gaussian_at(std::uint64_t k) const {
        const auto pair = block(k >> 1);
        return pair[k & 1u];
    }

    /// Next sample in sequence order.
    double next() {
        if ((position_ & 1u) == 0) cached_ = block(position_ >> 1);
        return cached_[position_++ & 1u];
    }

    std::uint64_t position() const { return position_; }

private:
    std::array<double, 2> block(std::uint64_t index) const {
        const auto w = philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                   static_cast<std::uint32_t>(stream_id_),
                                   static_cast<std::uint32_t>(stream_id_ >> 32)},
                                  key_);
        // 53-bit uniforms; u1 in (0, 1] keeps the logarithm finite.
        constexpr double kScale = 1.0 / 9007199254740992.0;
        const std::uint64_t a = (std::uint64_t{w[0]} << 32 | w[1]) >> 11;
        const std::uint64_t b = (std::uint64_t{w[2]} << 32 | w[3]) >> 11;
        const double u1 = (static_cast<double>(a) + 1.0) * kScale;
        const double u2 = static_cast<double>(b) * kScale;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_id_;
    std::uint64_t position_ = 0;
    std::array<double, 2> cached_{};
};

} // namespace epictrl
