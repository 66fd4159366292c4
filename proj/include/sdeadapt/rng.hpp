#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace sdeadapt {

// Stafford mix13 finalizer; full avalanche on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Counter-based Gaussian stream. A stream is identified by
/// (master_seed, path_index); each draw is a pure function of the stream key
/// and a caller-supplied 64-bit draw key, so parallel paths are independent
/// and any draw can be replayed without sequencing state.
class GaussianStream {
public:
    GaussianStream(std::uint64_t master_seed, std::uint64_t path_index) noexcept
        : key_(mix64(master_seed ^ mix64(path_index ^ 0xc2b2ae3d27d4eb4full))) {}

    /// N(0,1) via Box-Muller on two salted uniforms derived from the draw key.
    double normal(std::uint64_t draw_key) const noexcept {
        const std::uint64_t h1 = mix64(key_ ^ mix64(draw_key));
        const std::uint64_t h2 = mix64(h1 ^ 0x9e3779b97f4a7c15ull);
        // u1 in (0,1] keeps the log finite; u2 in [0,1).
        const double u1 = 1.0 - static_cast<double>(h1 >> 11) * 0x1.0p-53;
        const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Draw keyed by the bit pattern of a time point.
    double normal_at(double t) const noexcept {
        return normal(std::bit_cast<std::uint64_t>(t));
    }

    std::uint64_t stream_key() const noexcept { return key_; }

private:
    std::uint64_t key_;
};

} // namespace sdeadapt
