#include "mcq/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcq {

CdfPartition build_cdf(std::span<const double> probs, bool sort) {
  const std::size_t n = probs.size();
  CdfPartition cdf;
  cdf.index_map.resize(n);
  std::iota(cdf.index_map.begin(), cdf.index_map.end(), 0u);
  if (sort) {
    std::stable_sort(cdf.index_map.begin(), cdf.index_map.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return probs[a] < probs[b]; });
  }

  cdf.boundaries.resize(n + 1);
  cdf.boundaries[0] = 0.0;
  double running = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    running += probs[cdf.index_map[m]];
    cdf.boundaries[m + 1] = std::min(running, 1.0);
  }
  // Everything from the last non-empty interval onward ends exactly at 1, so
  // rounding in the running sum can never hand a sample to a zero value.
  std::size_t last = n;
  while (last > 0 && probs[cdf.index_map[last - 1]] <= 0.0) --last;
  for (std::size_t m = std::max<std::size_t>(last, 1); m <= n; ++m) cdf.boundaries[m] = 1.0;
  return cdf;
}

double SampleStream::at(std::int64_t i) const noexcept {
  constexpr double kBelowOne = 0x1.fffffffffffffp-1;
  const double x = (static_cast<double>(i) + xi) / static_cast<double>(count);
  return std::min(x, kBelowOne);
}

std::int64_t sample_count(std::size_t n_values, double K) {
  if (n_values == 0) throw std::invalid_argument("sample_count: no values to sample");
  if (!(K > 0.0) || !std::isfinite(K)) throw std::invalid_argument("sample_count: K must be finite and > 0");
  const double product = static_cast<double>(n_values) * K;
  const double nearest = std::round(product);
  const double n = std::fabs(product - nearest) <= 1e-9 * std::max(1.0, product) ? nearest : std::ceil(product);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

SampleStream sample_stream(std::size_t n_values, double K, Rng& rng) {
  SampleStream s;
  s.count = sample_count(n_values, K);
  s.xi = rng.next_uniform();
  return s;
}

std::vector<std::int32_t> count_hits(const CdfPartition& cdf, const SampleStream& stream,
                                     std::span<const std::int8_t> signs) {
  const std::size_t n = cdf.size();
  std::vector<std::int32_t> counts(n, 0);
  if (n == 0) return counts;

  // Interval m is [boundaries[m], boundaries[m+1]); samples only move right.
  std::size_t m = 0;
  for (std::int64_t i = 0; i < stream.count; ++i) {
    const double x = stream.at(i);
    while (m + 1 < n && cdf.boundaries[m + 1] <= x) ++m;
    const std::uint32_t original = cdf.index_map[m];
    counts[original] += signs[original] < 0 ? -1 : 1;
  }
  return counts;
}

} // namespace mcq
