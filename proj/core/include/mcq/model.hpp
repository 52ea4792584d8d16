#pragma once

#include "mcq/quantized_tensor.hpp"
#include "mcq/tensor.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcq {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten, batchnorm };

std::string_view to_string(LayerKind kind) noexcept;
std::optional<LayerKind> parse_layer_kind(std::string_view text) noexcept;

struct ConvAttrs {
  int stride = 1;
  int padding = 0;
};

struct PoolAttrs {
  int window = 2;
  int stride = 2;
};

/// Per-channel (or per-feature) batch normalization parameters.
struct BatchNormParams {
  double epsilon = 1e-5;
  Tensor gamma;
  Tensor beta;
  Tensor mean;
  Tensor var;
};

/// One stage of a linear network.
///
/// Dense weights have shape [in, out]: column j feeds output neuron j.
/// Conv2d weights have shape [out_channels, in_channels, kh, kw].
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::relu;

  std::optional<Tensor> weights;
  std::optional<Tensor> bias;
  /// Present once the layer has been quantized; replaces `weights` for
  /// inference and serialization.
  std::optional<QuantizedTensor> quantized;

  ConvAttrs conv;
  PoolAttrs pool;
  std::optional<BatchNormParams> batchnorm;

  bool is_quantizable() const noexcept {
    return kind == LayerKind::dense || kind == LayerKind::conv2d;
  }
  bool is_quantized() const noexcept { return quantized.has_value(); }

  std::int64_t in_features() const;
  std::int64_t out_features() const;
  /// Receptive field of one output neuron: inputs for dense,
  /// in_channels * kh * kw for conv2d.
  std::int64_t fan_in() const;
  Shape weight_shape() const;
};

struct ModelGraph {
  Shape input_shape;
  std::vector<Layer> layers;

  bool is_quantized() const noexcept;
  std::size_t quantizable_count() const noexcept;
};

/// Output shape of `layer` for a given input shape (no batch dimension).
/// Throws ShapeError when the two are incompatible.
Shape infer_output_shape(const Layer& layer, const Shape& input);

/// Checks per-layer parameter shapes and that consecutive layers line up.
/// Returns the shape of the final output.
Shape validate(const ModelGraph& model);

} // namespace mcq
