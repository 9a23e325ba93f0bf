#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace snse {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Every
/// draw is a pure function of (key, counter), so streams can be addressed by
/// (seed, mode, step) without sequential state.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Independent streams drawn from the same seed.
enum class Stream : std::uint32_t {
  BrownianIncrement = 0,
  OuConvolution = 1,
  InitialCondition = 2,
  ConstantSearch = 3,
};

/// Two independent standard normals addressed by (seed, stream, k1, k2, step).
std::pair<double, double> normal_pair(std::uint64_t seed, Stream stream, int k1, int k2,
                                      std::uint64_t step);

/// Two independent uniforms in (0, 1) at the same address.
std::pair<double, double> uniform_pair(std::uint64_t seed, Stream stream, int k1, int k2,
                                       std::uint64_t step);

/// SplitMix64 finalizer; expands a master seed into per-replicate seeds.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

}  // namespace snse
