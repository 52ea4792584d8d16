#include "mcq/error.hpp"
#include "mcq/inference.hpp"
#include "mcq/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcq {

namespace {

/// Activations travel between layers as doubles with their shape.
struct Activation {
  Shape shape;
  std::vector<double> values;
};

Activation from_tensor(const Tensor& t) {
  return {t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}

Tensor to_tensor(const Activation& a) {
  std::vector<float> data(a.values.size());
  std::transform(a.values.begin(), a.values.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  return Tensor(a.shape, std::move(data));
}

// ---- kernels ---------------------------------------------------------------

/// Dense or conv2d MAC with a caller-supplied accumulate step; zero inputs
/// are skipped. Output layout: [out] or [out, oh, ow].
template <typename W, typename X, typename Acc, typename Mac>
std::vector<Acc> linear(const Layer& layer, const Shape& in_shape, const Shape& out_shape, std::span<const W> w,
                        std::span<const X> x, Mac&& mac) {
  std::vector<Acc> out(shape_numel(out_shape), Acc{});
  if (layer.kind == LayerKind::dense) {
    const std::size_t in = static_cast<std::size_t>(in_shape[0]);
    const std::size_t outs = static_cast<std::size_t>(out_shape[0]);
    for (std::size_t i = 0; i < in; ++i) {
      const X xi = x[i];
      if (xi == X{}) continue;
      const W* row = w.data() + i * outs;
      for (std::size_t j = 0; j < outs; ++j) mac(out[j], row[j], xi);
    }
    return out;
  }

  const Shape ws = layer.weight_shape();
  const std::int64_t C = in_shape[0], H = in_shape[1], Wd = in_shape[2];
  const std::int64_t O = ws[0], KH = ws[2], KW = ws[3];
  const std::int64_t OH = out_shape[1], OW = out_shape[2];
  const std::int64_t stride = layer.conv.stride, pad = layer.conv.padding;
  for (std::int64_t o = 0; o < O; ++o) {
    Acc* plane = out.data() + o * OH * OW;
    for (std::int64_t c = 0; c < C; ++c) {
      const X* channel = x.data() + c * H * Wd;
      for (std::int64_t ky = 0; ky < KH; ++ky) {
        for (std::int64_t kx = 0; kx < KW; ++kx) {
          const W wv = w[static_cast<std::size_t>(((o * C + c) * KH + ky) * KW + kx)];
          if (wv == W{}) continue;
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const std::int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t ox = 0; ox < OW; ++ox) {
              const std::int64_t ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= Wd) continue;
              mac(plane[oy * OW + ox], wv, channel[iy * Wd + ix]);
            }
          }
        }
      }
    }
  }
  return out;
}

void real_mac(double& acc, double w, double x) { acc += w * x; }

/// Output channel of each element of a [out] or [out, oh, ow] result.
std::size_t channel_of(const Shape& out_shape, std::size_t index) {
  return out_shape.size() == 1 ? index : index / static_cast<std::size_t>(out_shape[1] * out_shape[2]);
}

std::vector<double> real_weights(const Layer& layer) {
  if (layer.weights) {
    const auto v = layer.weights->values();
    return {v.begin(), v.end()};
  }
  const auto& q = *layer.quantized;
  std::vector<double> w(q.counts.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::size_t g = q.granularity == Granularity::layer ? 0 : neuron_group_of(q.shape, i);
    w[i] = q.counts[i] * q.rescale(g);
  }
  return w;
}

double bias_at(const Layer& layer, std::size_t channel) {
  return layer.bias ? static_cast<double>((*layer.bias)[channel]) : 0.0;
}

Activation run_full_precision_linear(const Layer& layer, const Activation& x) {
  Activation y;
  y.shape = infer_output_shape(layer, x.shape);
  const std::vector<double> w = real_weights(layer);
  y.values = linear<double, double, double>(layer, x.shape, y.shape, std::span<const double>(w),
                                            std::span<const double>(x.values), real_mac);
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += bias_at(layer, channel_of(y.shape, i));
  return y;
}

void apply_relu(Activation& a) {
  for (auto& v : a.values) v = std::max(v, 0.0);
}

Activation apply_maxpool(const Layer& layer, const Activation& x) {
  Activation y;
  y.shape = infer_output_shape(layer, x.shape);
  y.values.assign(shape_numel(y.shape), -std::numeric_limits<double>::infinity());
  const std::int64_t H = x.shape[1], W = x.shape[2], OH = y.shape[1], OW = y.shape[2];
  for (std::int64_t c = 0; c < x.shape[0]; ++c)
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        double& dst = y.values[static_cast<std::size_t>((c * OH + oy) * OW + ox)];
        for (int ky = 0; ky < layer.pool.window; ++ky)
          for (int kx = 0; kx < layer.pool.window; ++kx) {
            const std::int64_t iy = oy * layer.pool.stride + ky, ix = ox * layer.pool.stride + kx;
            dst = std::max(dst, x.values[static_cast<std::size_t>((c * H + iy) * W + ix)]);
          }
      }
  return y;
}

void apply_batchnorm(const Layer& layer, Activation& a) {
  const auto& bn = *layer.batchnorm;
  const std::size_t channels = static_cast<std::size_t>(a.shape[0]);
  const std::size_t per_channel = a.values.size() / channels;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const std::size_t c = i / per_channel;
    const double inv = 1.0 / std::sqrt(static_cast<double>(bn.var[c]) + bn.epsilon);
    a.values[i] = bn.gamma[c] * (a.values[i] - bn.mean[c]) * inv + bn.beta[c];
  }
}

/// Applies a parameter-free (or batchnorm) layer in place.
void apply_elementwise(const Layer& layer, Activation& a) {
  switch (layer.kind) {
  case LayerKind::relu:
    apply_relu(a);
    break;
  case LayerKind::maxpool2d:
    a = apply_maxpool(layer, a);
    break;
  case LayerKind::flatten:
    a.shape = infer_output_shape(layer, a.shape);
    break;
  case LayerKind::batchnorm:
    infer_output_shape(layer, a.shape);
    apply_batchnorm(layer, a);
    break;
  default:
    throw std::logic_error("apply_elementwise called on a linear layer");
  }
}

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

/// Result of one quantized MAC: exact integer accumulators when the input
/// was quantized, real ones otherwise, plus the input's rescale factor.
struct QuantizedMac {
  std::vector<double> acc;
  double input_rescale = 1.0;
};

QuantizedMac quantized_mac(const Layer& layer, std::size_t layer_index, const Activation& x, const Shape& out_shape,
                           bool quantize_input, const InferenceOptions& options, std::uint64_t q_index,
                           std::uint64_t sample_index, std::vector<ActivationRecord>& records) {
  const QuantizedTensor& wq = *layer.quantized;
  QuantizedMac result;

  if (!quantize_input || all_zero(x.values)) {
    result.acc = linear<std::int32_t, double, double>(layer, x.shape, out_shape, std::span<const std::int32_t>(wq.counts),
                                                      std::span<const double>(x.values), real_mac);
    return result;
  }

  Rng rng = activation_rng(options.seed, q_index, sample_index);
  const QuantizedTensor aq = quantize_values(
      x.values, x.shape, TensorSampling{options.K_activations, options.sort, Granularity::layer, ValueKind::activations},
      rng);

  const std::size_t group_size = wq.numel() / wq.group_count();
  OverflowBudget budget;
  budget.fan_in = layer.fan_in();
  budget.K_w = static_cast<double>(wq.group_samples) / static_cast<double>(group_size);
  budget.K_a = static_cast<double>(aq.sample_count) / static_cast<double>(aq.numel());
  if (!budget.admits(wq.max_abs_count(), aq.max_abs_count())) {
    throw OverflowError("layer '" + layer.name + "': predicted accumulator magnitude " +
                        std::to_string(budget.predicted_peak(wq.max_abs_count(), aq.max_abs_count())) +
                        " exceeds the 2^55 budget");
  }

  bool overflow = false;
  const auto checked_mac = [&overflow](std::int64_t& acc, std::int32_t w, std::int32_t a) {
    const std::int64_t product = static_cast<std::int64_t>(w) * static_cast<std::int64_t>(a);
    overflow |= __builtin_add_overflow(acc, product, &acc);
  };
  const auto acc = linear<std::int32_t, std::int32_t, std::int64_t>(
      layer, x.shape, out_shape, std::span<const std::int32_t>(wq.counts), std::span<const std::int32_t>(aq.counts),
      checked_mac);
  if (overflow) throw OverflowError("layer '" + layer.name + "': integer accumulator overflow");

  result.acc.assign(acc.begin(), acc.end());
  result.input_rescale = aq.rescale();

  ActivationRecord rec;
  rec.layer = layer_index;
  rec.numel = aq.numel();
  rec.sample_count = aq.sample_count;
  rec.bit_width = aq.bit_width;
  rec.nonzero = aq.nonzero_count();
  records.push_back(rec);
  return result;
}

} // namespace

Tensor forward_full_precision(const ModelGraph& model, const Tensor& input) {
  if (input.shape() != model.input_shape) {
    throw ShapeError("input shape " + shape_to_string(input.shape()) + " does not match model input " +
                     shape_to_string(model.input_shape));
  }
  Activation a = from_tensor(input);
  for (const auto& layer : model.layers) {
    if (layer.is_quantizable()) {
      a = run_full_precision_linear(layer, a);
    } else {
      apply_elementwise(layer, a);
    }
  }
  return to_tensor(a);
}

QuantizedForward forward_quantized(const ModelGraph& model, const Tensor& input, const InferenceOptions& options,
                                   std::uint64_t sample_index) {
  if (input.shape() != model.input_shape) {
    throw ShapeError("input shape " + shape_to_string(input.shape()) + " does not match model input " +
                     shape_to_string(model.input_shape));
  }
  if (options.quantize_activations && (!(options.K_activations > 0.0) || !std::isfinite(options.K_activations))) {
    throw std::invalid_argument("K_activations must be finite and > 0");
  }
  const bool deferred = options.pipeline == Pipeline::deferred;
  if (deferred) {
    for (const auto& layer : model.layers)
      if (layer.quantized && layer.quantized->granularity != Granularity::layer)
        throw std::invalid_argument("the deferred pipeline requires layer granularity");
  }

  QuantizedForward result;
  Activation a = from_tensor(input);
  // Deferred pipeline: real activation = scale * a.
  double scale = 1.0;
  bool raw_input = true;
  std::uint64_t q_index = 0;

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    if (!layer.is_quantizable()) {
      apply_elementwise(layer, a);
      continue;
    }

    if (!layer.is_quantized()) {
      if (scale != 1.0) {
        for (auto& v : a.values) v *= scale;
        scale = 1.0;
      }
      a = run_full_precision_linear(layer, a);
    } else {
      const Shape out_shape = infer_output_shape(layer, a.shape);
      const bool quantize_input = options.quantize_activations && (!raw_input || options.quantize_input);
      const QuantizedMac mac =
          quantized_mac(layer, li, a, out_shape, quantize_input, options, q_index, sample_index, result.activations);
      const QuantizedTensor& wq = *layer.quantized;

      Activation y;
      y.shape = out_shape;
      y.values.resize(mac.acc.size());
      if (!deferred) {
        for (std::size_t i = 0; i < y.values.size(); ++i) {
          const std::size_t c = channel_of(out_shape, i);
          y.values[i] = mac.acc[i] * wq.rescale(c) * mac.input_rescale + bias_at(layer, c);
        }
      } else {
        // acc * (f_w/N_w) * r_in is the real pre-activation; dividing by
        // fan_in keeps the integer domain bounded.
        const std::int64_t fan_in = layer.fan_in();
        const double r_in = scale * mac.input_rescale;
        for (std::size_t i = 0; i < y.values.size(); ++i) {
          const std::size_t c = channel_of(out_shape, i);
          y.values[i] = mac.acc[i] / static_cast<double>(fan_in) +
                        scale_bias(bias_at(layer, c), wq.scale_f, wq.sample_count, fan_in) / r_in;
        }
        scale = static_cast<double>(fan_in) * wq.rescale() * r_in;
      }
      a = std::move(y);
    }
    raw_input = false;
    ++q_index;
  }

  if (scale != 1.0)
    for (auto& v : a.values) v *= scale;
  result.logits = to_tensor(a);
  return result;
}

double scale_bias(double bias, double scale_f, std::int64_t sample_count, std::int64_t fan_in) {
  return bias * (static_cast<double>(sample_count) / scale_f) * (1.0 / static_cast<double>(fan_in));
}

double expected_activation_magnitude(std::int64_t fan_in, double K_w, double K_a) {
  return static_cast<double>(fan_in) * K_w * K_a;
}

double OverflowBudget::predicted_peak(std::int64_t max_weight_count, std::int64_t max_activation_count) const {
  return expected_magnitude() * static_cast<double>(max_weight_count) * static_cast<double>(max_activation_count);
}

bool OverflowBudget::admits(std::int64_t max_weight_count, std::int64_t max_activation_count) const {
  return predicted_peak(max_weight_count, max_activation_count) <= kLimit;
}

} // namespace mcq
