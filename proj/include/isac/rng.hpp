#pragma once

#include <cstdint>
#include <random>

namespace isac {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed fan-out: every (root, stream, index) triple maps to an
/// independent child seed, so subsystems never share a generator.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(root) ^ stream) ^ index);
}

namespace stream {
inline constexpr std::uint64_t kDataset = 0x01;
inline constexpr std::uint64_t kSplit = 0x02;
inline constexpr std::uint64_t kInit = 0x03;
inline constexpr std::uint64_t kShuffle = 0x04;
inline constexpr std::uint64_t kRadarNoise = 0x05;
inline constexpr std::uint64_t kChannel = 0x06;
}  // namespace stream

}  // namespace isac
