#pragma once

#include "mcq/model.hpp"
#include "mcq/quantized_tensor.hpp"
#include "mcq/rng.hpp"
#include "mcq/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mcq {

struct SamplingConfig {
  double K_weights = 1.0;
  double K_activations = 1.0;
  std::uint64_t seed = 0;
  bool sort = false;
  Granularity granularity = Granularity::layer;
  bool skip_first_layer = false;
  bool skip_last_layer = false;

  /// Throws std::invalid_argument unless both K values are finite and > 0.
  void validate() const;
};

/// What a tensor holds; decides whether the bit width reserves a sign bit.
enum class ValueKind { weights, activations };

/// Bits needed for the largest |count|: 1 + floor(log2(max)) + 1 for
/// weights (sign bit included) and 1 + floor(log2(max)) for activations.
/// Throws DegenerateError("empty quantization") when every count is zero.
int bit_width(std::span<const std::int32_t> counts, ValueKind kind = ValueKind::weights);

struct TensorSampling {
  double K = 1.0;
  bool sort = false;
  Granularity granularity = Granularity::layer;
  ValueKind kind = ValueKind::weights;
};

/// Monte Carlo quantization of one tensor: normalize, lay out the CDF, draw
/// one jittered equidistant stream per group and count signed hits.
/// Activations that contain negative values keep the sign bit.
QuantizedTensor quantize_tensor(const Tensor& values, const TensorSampling& options, Rng& rng);
/// Same procedure over double-precision values (layer granularity only),
/// used for online activation quantization.
QuantizedTensor quantize_values(std::span<const double> values, const Shape& shape,
                                const TensorSampling& options, Rng& rng);
/// Weight quantization using cfg.K_weights, cfg.sort and cfg.granularity.
QuantizedTensor quantize_tensor(const Tensor& values, const SamplingConfig& cfg, Rng& rng);

struct LayerRecord {
  std::string name;
  std::string kind;
  bool quantized = false;
  std::size_t numel = 0;
  std::int64_t sample_count = 0;
  double scale_f = 0.0;
  int bit_width = 0;
  std::size_t nonzero = 0;
  double nonzero_fraction = 1.0;
  std::int64_t max_abs_count = 0;
};

struct QuantReport {
  SamplingConfig config;
  std::vector<LayerRecord> layers;
  double average_weight_bits = 0.0;
  double weight_nonzero_fraction = 1.0;
  double weight_sparsity = 0.0;
  std::size_t quantized_layer_count = 0;

  /// Recomputes the aggregates from the per-layer records.
  void finalize();
};

/// Quantizes every dense/conv2d layer not excluded by the skip flags. The
/// generator for the q-th quantizable layer is rng_from(seed, q, weights),
/// so results do not depend on processing order. `threads` bounds the
/// number of layers quantized concurrently (0 = one per layer).
struct QuantizeResult {
  ModelGraph model;
  QuantReport report;
};
QuantizeResult quantize_model(const ModelGraph& model, const SamplingConfig& cfg,
                              unsigned threads = 1);

} // namespace mcq
