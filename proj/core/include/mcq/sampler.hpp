#pragma once

#include "mcq/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcq {

/// Partition of [0, 1) into one interval per value.
///
/// `boundaries` has n + 1 entries: boundaries[0] = 0, boundaries[n] = 1
/// exactly. Interval m (0-based) is [boundaries[m], boundaries[m+1]) and
/// belongs to original index `index_map[m]`.
struct CdfPartition {
  std::vector<double> boundaries;
  std::vector<std::uint32_t> index_map;

  std::size_t size() const noexcept { return index_map.size(); }
};

/// Cumulative partition of `probs`. With `sort`, intervals are laid out by
/// ascending probability (stable on ties) and `index_map` is the
/// permutation; otherwise `index_map` is the identity.
CdfPartition build_cdf(std::span<const double> probs, bool sort);

/// N jittered equidistant samples x_i = (i + xi) / N.
struct SampleStream {
  std::int64_t count = 0;
  double xi = 0.0;

  /// Sample i, clamped below 1 so rounding never pushes it off the end.
  double at(std::int64_t i) const noexcept;
};

/// ceil(n_values * K). Products within 1e-9 (relative) of an integer are
/// snapped to it so that e.g. 100 * 0.07 gives 7, not 8.
std::int64_t sample_count(std::size_t n_values, double K);

/// N = sample_count(n_values, K); xi drawn once from `rng`.
SampleStream sample_stream(std::size_t n_values, double K, Rng& rng);

/// Signed hit counts in original index order.
///
/// Sample x hits interval m when boundaries[m] <= x < boundaries[m+1].
/// The samples are monotone, so a single forward scan resolves all hits in
/// O(N + n). Counts carry the sign of `signs[original index]`.
std::vector<std::int32_t> count_hits(const CdfPartition& cdf, const SampleStream& stream,
                                     std::span<const std::int8_t> signs);

} // namespace mcq
