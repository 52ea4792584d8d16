#pragma once

#include <cstdint>

namespace mcq {

/// SplitMix64. Chosen because its output is fully specified by a handful of
/// integer operations, so streams are identical on every platform.
class Rng {
public:
  constexpr explicit Rng(std::uint64_t state = 0) noexcept : state_(state) {}

  constexpr std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double next_uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double next_gaussian() noexcept;

  constexpr std::uint64_t state() const noexcept { return state_; }

private:
  std::uint64_t state_;
};

enum class StreamTag : std::uint64_t { weights = 0, activations = 1 };

inline constexpr std::uint64_t kLayerSeedStride = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kSampleSeedStride = 0xD1B54A32D192ED03ULL;

/// Generator for one (layer, tensor kind). `layer_index` counts quantizable
/// layers only.
constexpr Rng rng_from(std::uint64_t seed, std::uint64_t layer_index, StreamTag tag) noexcept {
  return Rng(seed ^ (layer_index * kLayerSeedStride) ^ static_cast<std::uint64_t>(tag));
}

/// Activation generator for one input sample. Sample 0 coincides with the
/// plain activation stream of the layer.
constexpr Rng activation_rng(std::uint64_t seed, std::uint64_t layer_index,
                             std::uint64_t sample_index) noexcept {
  return Rng(rng_from(seed, layer_index, StreamTag::activations).state() ^
             (sample_index * kSampleSeedStride));
}

} // namespace mcq
