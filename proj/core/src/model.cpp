#include "mcq/error.hpp"
#include "mcq/model.hpp"

#include <array>
#include <utility>

namespace mcq {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 6> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::relu, "relu"},
    {LayerKind::maxpool2d, "maxpool2d"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::batchnorm, "batchnorm"},
}};

[[noreturn]] void shape_fail(const Layer& layer, const std::string& what) {
  throw ShapeError("layer '" + layer.name + "' (" + std::string(to_string(layer.kind)) + "): " + what);
}

void check_vector(const Layer& layer, const Tensor& t, std::int64_t length, const char* what) {
  if (t.rank() != 1 || t.dim(0) != length) {
    shape_fail(layer, std::string(what) + " has shape " + shape_to_string(t.shape()) +
                          ", expected [" + std::to_string(length) + "]");
  }
}

} // namespace

std::string_view to_string(LayerKind kind) noexcept {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) noexcept {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  return std::nullopt;
}

Shape Layer::weight_shape() const {
  if (quantized) return quantized->shape;
  if (weights) return weights->shape();
  shape_fail(*this, "missing weights");
}

std::int64_t Layer::in_features() const {
  const Shape s = weight_shape();
  return kind == LayerKind::dense ? s.at(0) : s.at(1);
}

std::int64_t Layer::out_features() const {
  const Shape s = weight_shape();
  return kind == LayerKind::dense ? s.at(1) : s.at(0);
}

std::int64_t Layer::fan_in() const {
  const Shape s = weight_shape();
  if (kind == LayerKind::dense) return s.at(0);
  return s.at(1) * s.at(2) * s.at(3);
}

bool ModelGraph::is_quantized() const noexcept {
  for (const auto& l : layers)
    if (l.is_quantized()) return true;
  return false;
}

std::size_t ModelGraph::quantizable_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.is_quantizable();
  return n;
}

Shape infer_output_shape(const Layer& layer, const Shape& input) {
  switch (layer.kind) {
  case LayerKind::dense: {
    const Shape w = layer.weight_shape();
    if (w.size() != 2) shape_fail(layer, "dense weights must be 2-D, got " + shape_to_string(w));
    if (input.size() != 1 || input[0] != w[0]) {
      shape_fail(layer, "input " + shape_to_string(input) + " does not match weights " + shape_to_string(w));
    }
    if (layer.bias) check_vector(layer, *layer.bias, w[1], "bias");
    return {w[1]};
  }
  case LayerKind::conv2d: {
    const Shape w = layer.weight_shape();
    if (w.size() != 4) shape_fail(layer, "conv2d weights must be 4-D, got " + shape_to_string(w));
    if (input.size() != 3 || input[0] != w[1]) {
      shape_fail(layer, "input " + shape_to_string(input) + " does not match weights " + shape_to_string(w));
    }
    if (layer.conv.stride < 1 || layer.conv.padding < 0) shape_fail(layer, "invalid stride or padding");
    if (layer.bias) check_vector(layer, *layer.bias, w[0], "bias");
    const std::int64_t oh = (input[1] + 2 * layer.conv.padding - w[2]) / layer.conv.stride + 1;
    const std::int64_t ow = (input[2] + 2 * layer.conv.padding - w[3]) / layer.conv.stride + 1;
    if (oh <= 0 || ow <= 0) shape_fail(layer, "kernel larger than padded input " + shape_to_string(input));
    return {w[0], oh, ow};
  }
  case LayerKind::relu:
    return input;
  case LayerKind::maxpool2d: {
    if (input.size() != 3) shape_fail(layer, "maxpool2d expects [C, H, W], got " + shape_to_string(input));
    if (layer.pool.window < 1 || layer.pool.stride < 1) shape_fail(layer, "invalid pool window or stride");
    const std::int64_t oh = (input[1] - layer.pool.window) / layer.pool.stride + 1;
    const std::int64_t ow = (input[2] - layer.pool.window) / layer.pool.stride + 1;
    if (oh <= 0 || ow <= 0) shape_fail(layer, "pool window larger than input " + shape_to_string(input));
    return {input[0], oh, ow};
  }
  case LayerKind::flatten:
    return {static_cast<std::int64_t>(shape_numel(input))};
  case LayerKind::batchnorm: {
    if (!layer.batchnorm) shape_fail(layer, "missing batchnorm parameters");
    if (input.empty()) shape_fail(layer, "empty input shape");
    const auto& bn = *layer.batchnorm;
    const std::int64_t channels = input[0];
    check_vector(layer, bn.gamma, channels, "gamma");
    check_vector(layer, bn.beta, channels, "beta");
    check_vector(layer, bn.mean, channels, "mean");
    check_vector(layer, bn.var, channels, "var");
    if (!(bn.epsilon >= 0.0)) shape_fail(layer, "negative epsilon");
    return input;
  }
  }
  shape_fail(layer, "unknown layer kind");
}

Shape validate(const ModelGraph& model) {
  if (model.input_shape.empty()) throw ShapeError("model has no input shape");
  shape_numel(model.input_shape);
  Shape current = model.input_shape;
  for (const auto& layer : model.layers) {
    if (layer.is_quantizable() && !layer.weights && !layer.quantized) shape_fail(layer, "missing weights");
    if (layer.quantized && layer.quantized->counts.size() != shape_numel(layer.quantized->shape)) {
      shape_fail(layer, "count length does not match shape");
    }
    current = infer_output_shape(layer, current);
  }
  return current;
}

} // namespace mcq
