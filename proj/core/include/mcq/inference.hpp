#pragma once

#include "mcq/model.hpp"
#include "mcq/quantizer.hpp"
#include "mcq/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mcq {

/// Real-valued forward pass through dense, conv2d, relu, maxpool2d, flatten
/// and batchnorm layers. Quantized layers are evaluated with their
/// dequantized weights. Accumulates in double precision.
Tensor forward_full_precision(const ModelGraph& model, const Tensor& input);

/// Where the f/N rescaling happens in the quantized pass.
enum class Pipeline {
  /// Integer MAC, then multiply by (f_w/N_w)(f_a/N_a) and add the bias,
  /// layer by layer.
  rescale_per_layer,
  /// Activations stay in the integer domain: the accumulator is divided by
  /// the fan-in and biases are pre-scaled with scale_bias. One scalar is
  /// carried along and applied to the logits at the end.
  deferred,
};

struct InferenceOptions {
  /// Quantize the input of every quantized layer online.
  bool quantize_activations = true;
  /// Also quantize the raw network input when it feeds a quantized layer.
  bool quantize_input = false;
  double K_activations = 1.0;
  bool sort = false;
  std::uint64_t seed = 0;
  Pipeline pipeline = Pipeline::rescale_per_layer;
};

/// Activation statistics for one quantized layer input.
struct ActivationRecord {
  std::size_t layer = 0;            ///< index into ModelGraph::layers
  std::size_t numel = 0;
  std::int64_t sample_count = 0;
  int bit_width = 0;
  std::size_t nonzero = 0;
};

struct QuantizedForward {
  Tensor logits;
  std::vector<ActivationRecord> activations;
};

/// Quantized forward pass. Layers with QuantizedTensor weights use integer
/// MACs in checked 64-bit accumulators; their inputs are quantized with the
/// generator activation_rng(seed, q, sample_index) where q counts
/// quantizable layers. Layers left in full precision run on real inputs.
/// Throws OverflowError (naming the layer) when the accumulator budget
/// would be exceeded and ShapeError on mismatched inputs.
QuantizedForward forward_quantized(const ModelGraph& model, const Tensor& input,
                                   const InferenceOptions& options,
                                   std::uint64_t sample_index = 0);

/// Bias in the deferred pipeline's integer domain:
/// bias * (N / scale_f) * (1 / fan_in).
double scale_bias(double bias, double scale_f, std::int64_t sample_count, std::int64_t fan_in);

/// Expected accumulator magnitude of a neuron: fan_in * K_w * K_a.
double expected_activation_magnitude(std::int64_t fan_in, double K_w, double K_a);

/// Accumulator budget of one layer: 64-bit accumulators keep at least
/// kHeadroomBits spare bits.
struct OverflowBudget {
  static constexpr int kAccumulatorBits = 64;
  static constexpr int kHeadroomBits = 8;
  /// 2^55.
  static constexpr double kLimit = 36028797018963968.0;

  std::int64_t fan_in = 1;
  double K_w = 1.0;
  double K_a = 1.0;

  double expected_magnitude() const { return expected_activation_magnitude(fan_in, K_w, K_a); }
  /// Predicted magnitude times the largest count product.
  double predicted_peak(std::int64_t max_weight_count, std::int64_t max_activation_count) const;
  bool admits(std::int64_t max_weight_count, std::int64_t max_activation_count) const;
};

} // namespace mcq
