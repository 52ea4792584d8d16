#pragma once

#include "mcq/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mcq {

/// Labelled evaluation samples sharing one input shape.
struct Dataset {
  std::string name;
  Shape sample_shape;
  int num_classes = 0;
  std::vector<Tensor> inputs;
  std::vector<std::int32_t> labels;

  std::size_t size() const noexcept { return inputs.size(); }
  /// Throws FormatError on unequal lengths, out-of-range labels or inputs
  /// whose shape differs from sample_shape.
  void validate() const;
};

/// Dataset container: a directory with `dataset.json` (name, sample_shape,
/// num_classes, count) plus `inputs.bin` (f32, count * numel values) and
/// `labels.bin` (i32), both little-endian.
inline constexpr const char* kDatasetManifestName = "dataset.json";

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

} // namespace mcq
