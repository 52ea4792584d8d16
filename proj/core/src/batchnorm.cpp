#include "mcq/batchnorm.hpp"
#include "mcq/error.hpp"

#include <cmath>

namespace mcq {

ModelGraph fold_batchnorm(const ModelGraph& model) {
  ModelGraph out;
  out.input_shape = model.input_shape;
  for (const auto& layer : model.layers) {
    if (layer.kind != LayerKind::batchnorm) {
      out.layers.push_back(layer);
      continue;
    }
    if (out.layers.empty() || !out.layers.back().is_quantizable() || !out.layers.back().weights ||
        out.layers.back().is_quantized()) {
      throw ShapeError("batchnorm '" + layer.name + "' is not preceded by a full-precision dense or conv2d layer");
    }
    if (!layer.batchnorm) throw ShapeError("batchnorm '" + layer.name + "' has no parameters");

    Layer& target = out.layers.back();
    const auto& bn = *layer.batchnorm;
    const std::int64_t channels = target.out_features();
    if (bn.gamma.numel() != static_cast<std::size_t>(channels) || bn.beta.numel() != bn.gamma.numel() ||
        bn.mean.numel() != bn.gamma.numel() || bn.var.numel() != bn.gamma.numel()) {
      throw ShapeError("batchnorm '" + layer.name + "' parameter length does not match '" + target.name + "'");
    }
    if (!target.bias) target.bias = Tensor(Shape{channels});

    std::vector<double> scale(static_cast<std::size_t>(channels));
    for (std::size_t c = 0; c < scale.size(); ++c) {
      const double denom = std::sqrt(static_cast<double>(bn.var[c]) + bn.epsilon);
      if (!(denom > 0.0)) throw ShapeError("batchnorm '" + layer.name + "' has var + eps <= 0");
      scale[c] = bn.gamma[c] / denom;
    }

    auto w = target.weights->values();
    const Shape& ws = target.weights->shape();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t c = neuron_group_of(ws, i);
      w[i] = static_cast<float>(w[i] * scale[c]);
    }
    auto b = target.bias->values();
    for (std::size_t c = 0; c < b.size(); ++c)
      b[c] = static_cast<float>((static_cast<double>(b[c]) - bn.mean[c]) * scale[c] + bn.beta[c]);
  }
  return out;
}

} // namespace mcq
