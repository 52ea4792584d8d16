#pragma once

#include "mcq/dataset.hpp"
#include "mcq/inference.hpp"
#include "mcq/model.hpp"
#include "mcq/quantizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcq {

struct EvalResult {
  std::size_t samples = 0;
  std::size_t correct = 0;
  /// Top-1 accuracy in percent.
  double accuracy = 0.0;
  /// Mean over quantized layers of the per-layer mean activation bit width;
  /// 32 when no activation was quantized.
  double average_activation_bits = 32.0;
  /// Nonzero fraction of quantized activations, over every sample and layer.
  double activation_nonzero_fraction = 1.0;
  bool activations_quantized = false;
};

/// Top-1 evaluation; argmax over logits. Runs the quantized pass when the
/// model carries quantized layers, the full-precision pass otherwise.
/// Samples are processed on up to `threads` threads; results do not depend
/// on the thread count.
EvalResult evaluate(const ModelGraph& model, const Dataset& dataset,
                    const InferenceOptions& options, unsigned threads = 1);

std::size_t argmax(const Tensor& logits);

struct SweepRow {
  double K = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double average_weight_bits = 0.0;
  double average_activation_bits = 0.0;
  double weight_nonzero_pct = 0.0;
  double activation_nonzero_pct = 0.0;
};

struct SweepOptions {
  std::vector<double> k_grid;
  std::vector<std::uint64_t> seeds;
  /// Template for every cell; K_weights, K_activations and seed are
  /// overwritten per cell.
  SamplingConfig base;
  bool quantize_activations = true;
  bool quantize_input = false;
  unsigned threads = 1;
};

/// One row per (K, seed), K-major in grid order. A cell that throws is
/// kept as an error row.
std::vector<SweepRow> run_sweep(const ModelGraph& model, const Dataset& dataset,
                                const SweepOptions& options);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Runs fn(i) for i in [0, count) on up to `threads` threads.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn);

} // namespace mcq

#include "mcq/detail/parallel.hpp"
