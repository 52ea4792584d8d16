#include "mcq/error.hpp"
#include "mcq/evaluation.hpp"
#include "mcq/normalizer.hpp"
#include "mcq/quantizer.hpp"
#include "mcq/sampler.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace mcq {

void SamplingConfig::validate() const {
  if (!(K_weights > 0.0) || !std::isfinite(K_weights)) throw std::invalid_argument("K_weights must be finite and > 0");
  if (!(K_activations > 0.0) || !std::isfinite(K_activations)) {
    throw std::invalid_argument("K_activations must be finite and > 0");
  }
}

int bit_width(std::span<const std::int32_t> counts, ValueKind kind) {
  std::uint64_t max_abs = 0;
  for (auto c : counts) max_abs = std::max<std::uint64_t>(max_abs, static_cast<std::uint64_t>(std::llabs(c)));
  if (max_abs == 0) throw DegenerateError("empty quantization: all counts are zero");
  // 1 + floor(log2(max)) == std::bit_width(max); weights add a sign bit.
  const int magnitude_bits = static_cast<int>(std::bit_width(max_abs));
  return kind == ValueKind::weights ? magnitude_bits + 1 : magnitude_bits;
}

namespace {

QuantizedTensor quantize_view(const Shape& shape, const NormalizedView& view, const TensorSampling& options,
                              Rng& rng) {
  QuantizedTensor q;
  q.shape = shape;
  q.counts.assign(view.probs.size(), 0);
  q.granularity = options.granularity;

  for (std::size_t g = 0; g < view.group_count(); ++g) {
    const auto& members = view.groups[g];
    const std::vector<double> probs = view.group_probs(g);
    std::vector<std::int8_t> signs(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) signs[k] = view.signs[members[k]];

    const CdfPartition cdf = build_cdf(probs, options.sort);
    const SampleStream stream = sample_stream(members.size(), options.K, rng);
    const auto hits = count_hits(cdf, stream, signs);
    for (std::size_t k = 0; k < members.size(); ++k) q.counts[members[k]] = hits[k];

    // Groups of one tensor share a size, hence a sample count.
    q.group_samples = stream.count;
    q.sample_count += stream.count;
  }

  if (options.granularity == Granularity::neuron) q.group_scales = view.group_scales;
  q.scale_f = view.scale_f();

  bool has_negative = false;
  for (auto c : q.counts) has_negative |= c < 0;
  const ValueKind kind = options.kind == ValueKind::activations && has_negative ? ValueKind::weights : options.kind;
  q.bit_width = bit_width(q.counts, kind);
  return q;
}

} // namespace

QuantizedTensor quantize_tensor(const Tensor& values, const TensorSampling& options, Rng& rng) {
  const NormalizedView view = normalize(values, options.granularity);
  return quantize_view(values.shape(), view, options, rng);
}

QuantizedTensor quantize_values(std::span<const double> values, const Shape& shape,
                                const TensorSampling& options, Rng& rng) {
  if (options.granularity != Granularity::layer) {
    throw std::invalid_argument("quantize_values supports layer granularity only");
  }
  if (values.size() != shape_numel(shape)) throw ShapeError("value count does not match shape");
  const NormalizedView view = normalize(values);
  return quantize_view(shape, view, options, rng);
}

QuantizedTensor quantize_tensor(const Tensor& values, const SamplingConfig& cfg, Rng& rng) {
  return quantize_tensor(values, TensorSampling{cfg.K_weights, cfg.sort, cfg.granularity, ValueKind::weights}, rng);
}

void QuantReport::finalize() {
  double bits = 0.0;
  std::size_t quantized = 0;
  std::size_t nonzero = 0;
  std::size_t total = 0;
  for (const auto& rec : layers) {
    if (!rec.quantized) continue;
    ++quantized;
    bits += rec.bit_width;
    total += rec.numel;
    nonzero += rec.nonzero;
  }
  quantized_layer_count = quantized;
  average_weight_bits = quantized ? bits / static_cast<double>(quantized) : 32.0;
  weight_nonzero_fraction = total ? static_cast<double>(nonzero) / static_cast<double>(total) : 1.0;
  weight_sparsity = 1.0 - weight_nonzero_fraction;
}

QuantizeResult quantize_model(const ModelGraph& model, const SamplingConfig& cfg, unsigned threads) {
  cfg.validate();
  QuantizeResult result;
  result.model = model;
  result.report.config = cfg;

  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    if (layer.kind == LayerKind::batchnorm) {
      throw std::invalid_argument("fold batchnorm layers before quantizing ('" + layer.name + "')");
    }
    if (layer.is_quantizable()) targets.push_back(i);
  }

  std::vector<LayerRecord> records(targets.size());
  parallel_for(targets.size(), threads, [&](std::size_t q) {
    Layer& layer = result.model.layers[targets[q]];
    LayerRecord& rec = records[q];
    rec.name = layer.name;
    rec.kind = std::string(to_string(layer.kind));

    const bool skip = (cfg.skip_first_layer && q == 0) || (cfg.skip_last_layer && q + 1 == targets.size());
    if (skip || layer.is_quantized()) {
      rec.numel = shape_numel(layer.weight_shape());
      if (layer.is_quantized()) {
        // Already quantized input: report it as-is.
        const auto& qt = *layer.quantized;
        rec.quantized = true;
        rec.sample_count = qt.sample_count;
        rec.scale_f = qt.scale_f;
        rec.bit_width = qt.bit_width;
        rec.max_abs_count = qt.max_abs_count();
        rec.nonzero = qt.nonzero_count();
        rec.nonzero_fraction = static_cast<double>(rec.nonzero) / static_cast<double>(rec.numel);
      }
      return;
    }

    Rng rng = rng_from(cfg.seed, q, StreamTag::weights);
    try {
      layer.quantized = quantize_tensor(*layer.weights, cfg, rng);
    } catch (const DegenerateError& e) {
      throw DegenerateError("layer '" + layer.name + "': " + e.what());
    }
    layer.weights.reset();

    const auto& qt = *layer.quantized;
    rec.quantized = true;
    rec.numel = qt.numel();
    rec.sample_count = qt.sample_count;
    rec.scale_f = qt.scale_f;
    rec.bit_width = qt.bit_width;
    rec.max_abs_count = qt.max_abs_count();
    rec.nonzero = qt.nonzero_count();
    rec.nonzero_fraction = static_cast<double>(rec.nonzero) / static_cast<double>(qt.numel());
  });

  result.report.layers = std::move(records);
  result.report.finalize();
  return result;
}

} // namespace mcq
