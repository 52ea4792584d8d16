#include "mcq/error.hpp"
#include "mcq/normalizer.hpp"

#include <cmath>
#include <numeric>

namespace mcq {

namespace {

template <typename T>
NormalizedView normalize_grouped(std::span<const T> values, std::vector<std::vector<std::uint32_t>> groups,
                                 Granularity granularity) {
  NormalizedView view;
  view.granularity = granularity;
  view.probs.assign(values.size(), 0.0);
  view.signs.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = static_cast<double>(values[i]);
    view.signs[i] = static_cast<std::int8_t>((v > 0.0) - (v < 0.0));
  }
  view.group_scales.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double norm = 0.0;
    for (auto i : groups[g]) norm += std::fabs(static_cast<double>(values[i]));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DegenerateError(groups.size() == 1 ? std::string("degenerate distribution: all values are zero")
                                               : "degenerate distribution: group " + std::to_string(g) +
                                                     " is all zero");
    }
    for (auto i : groups[g]) view.probs[i] = std::fabs(static_cast<double>(values[i])) / norm;
    view.group_scales.push_back(norm);
  }
  view.groups = std::move(groups);
  return view;
}

} // namespace

double NormalizedView::scale_f() const noexcept {
  return std::accumulate(group_scales.begin(), group_scales.end(), 0.0);
}

std::vector<double> NormalizedView::group_probs(std::size_t group) const {
  std::vector<double> out;
  out.reserve(groups[group].size());
  for (auto i : groups[group]) out.push_back(probs[i]);
  return out;
}

std::vector<std::vector<std::uint32_t>> make_groups(const Shape& shape, Granularity g) {
  const std::size_t n = shape_numel(shape);
  const std::size_t count = g == Granularity::layer ? 1 : neuron_group_count(shape);
  std::vector<std::vector<std::uint32_t>> groups(count);
  for (auto& grp : groups) grp.reserve(n / count);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t grp = count == 1 ? 0 : neuron_group_of(shape, i);
    groups[grp].push_back(static_cast<std::uint32_t>(i));
  }
  return groups;
}

NormalizedView normalize(const Tensor& values, Granularity granularity) {
  if (values.empty()) throw DegenerateError("degenerate distribution: empty tensor");
  return normalize_grouped(values.values(), make_groups(values.shape(), granularity), granularity);
}

NormalizedView normalize(std::span<const double> values) {
  if (values.empty()) throw DegenerateError("degenerate distribution: empty tensor");
  std::vector<std::vector<std::uint32_t>> groups(1);
  groups[0].resize(values.size());
  std::iota(groups[0].begin(), groups[0].end(), 0u);
  return normalize_grouped(values, std::move(groups), Granularity::layer);
}

double output_rescale_factor(double scale_f, std::int64_t sample_count) {
  if (sample_count < 1) throw std::invalid_argument("sample count must be >= 1");
  return scale_f / static_cast<double>(sample_count);
}

double output_rescale_factor(const NormalizedView& view, std::int64_t sample_count, std::size_t group) {
  return output_rescale_factor(view.group_scales.at(group), sample_count);
}

} // namespace mcq
