#pragma once

#include "mcq/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace mcq {

/// How values are grouped into probability distributions.
enum class Granularity { layer, neuron };

std::string_view to_string(Granularity g) noexcept;
std::optional<Granularity> parse_granularity(std::string_view text) noexcept;

/// Output neurons of a weight tensor: columns of a 2-D [in, out] matrix,
/// the leading axis of a conv kernel [out, ...], a single group otherwise.
std::size_t neuron_group_count(const Shape& shape);
std::size_t neuron_group_of(const Shape& shape, std::size_t index);

/// Signed hit counts standing in for a real-valued tensor.
///
/// Element i approximates `counts[i] * group_scale(i) / group_samples`.
/// With layer granularity there is one group, so `scale_f` is the tensor's
/// 1-norm and `group_samples == sample_count`. With neuron granularity each
/// output neuron has its own 1-norm in `group_scales`, every group receives
/// `group_samples` samples and `sample_count` is the total over groups.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int32_t> counts;
  double scale_f = 0.0;
  std::int64_t sample_count = 0;
  int bit_width = 0;

  Granularity granularity = Granularity::layer;
  std::vector<double> group_scales;
  std::int64_t group_samples = 0;

  std::size_t numel() const noexcept { return counts.size(); }
  std::size_t group_count() const noexcept {
    return granularity == Granularity::layer ? 1 : group_scales.size();
  }
  double group_scale(std::size_t group) const noexcept {
    return granularity == Granularity::layer ? scale_f : group_scales[group];
  }
  /// Multiplier restoring real units for counts in `group`: f/N.
  double rescale(std::size_t group = 0) const noexcept {
    return group_scale(group) / static_cast<double>(group_samples);
  }

  std::int64_t max_abs_count() const noexcept;
  std::size_t nonzero_count() const noexcept;

  /// counts scaled back to real units.
  Tensor dequantize() const;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

} // namespace mcq
