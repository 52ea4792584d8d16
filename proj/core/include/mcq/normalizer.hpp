#pragma once

#include "mcq/quantized_tensor.hpp"
#include "mcq/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcq {

/// Absolute values of a tensor scaled into one or more probability
/// distributions, along with the 1-norm of each group.
///
/// Groups: layer granularity uses one group over every element. Neuron
/// granularity groups by output neuron: columns of a 2-D dense weight
/// matrix [in, out], the leading axis of a 4-D conv kernel [out, ...].
struct NormalizedView {
  std::vector<double> probs;
  std::vector<std::int8_t> signs;
  Granularity granularity = Granularity::layer;
  /// Element indices of each group, in ascending order.
  std::vector<std::vector<std::uint32_t>> groups;
  /// 1-norm of each group, accumulated in double precision.
  std::vector<double> group_scales;

  std::size_t group_count() const noexcept { return groups.size(); }
  /// Layer granularity: the single 1-norm. Neuron granularity: the sum of
  /// group 1-norms (equal to the tensor's 1-norm).
  double scale_f() const noexcept;

  /// Probabilities of one group, gathered in group order.
  std::vector<double> group_probs(std::size_t group) const;
};

/// Group index of every element for the given granularity and shape.
std::vector<std::vector<std::uint32_t>> make_groups(const Shape& shape, Granularity g);

/// Throws DegenerateError("degenerate distribution") if any group sums to 0.
NormalizedView normalize(const Tensor& values, Granularity granularity = Granularity::layer);
NormalizedView normalize(std::span<const double> values);

/// f / N: the factor restoring real units after an integer MAC.
double output_rescale_factor(double scale_f, std::int64_t sample_count);
/// Same, using the 1-norm of `group` (the only group at layer granularity).
double output_rescale_factor(const NormalizedView& view, std::int64_t sample_count,
                             std::size_t group = 0);

} // namespace mcq
