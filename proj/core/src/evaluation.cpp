#include "mcq/error.hpp"
#include "mcq/evaluation.hpp"

#include "io_util.hpp"

#include <cstdio>
#include <map>

namespace mcq {

std::size_t argmax(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.numel(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

EvalResult evaluate(const ModelGraph& model, const Dataset& dataset, const InferenceOptions& options,
                    unsigned threads) {
  if (dataset.size() == 0) throw FormatError("dataset '" + dataset.name + "' is empty");
  if (dataset.sample_shape != model.input_shape) {
    throw ShapeError("dataset sample shape " + shape_to_string(dataset.sample_shape) +
                     " does not match model input " + shape_to_string(model.input_shape));
  }
  const bool quantized = model.is_quantized();

  std::vector<char> correct(dataset.size(), 0);
  std::vector<std::vector<ActivationRecord>> records(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    Tensor logits;
    if (quantized) {
      auto out = forward_quantized(model, dataset.inputs[i], options, i);
      logits = std::move(out.logits);
      records[i] = std::move(out.activations);
    } else {
      logits = forward_full_precision(model, dataset.inputs[i]);
    }
    correct[i] = static_cast<std::int32_t>(argmax(logits)) == dataset.labels[i];
  });

  EvalResult r;
  r.samples = dataset.size();
  for (char c : correct) r.correct += static_cast<std::size_t>(c);
  r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.samples);

  // Mean bit width per layer over samples, then the unweighted mean over layers.
  std::map<std::size_t, std::pair<double, std::size_t>> per_layer;
  std::size_t nonzero = 0, total = 0;
  for (const auto& sample : records) {
    for (const auto& rec : sample) {
      auto& [bits, n] = per_layer[rec.layer];
      bits += rec.bit_width;
      ++n;
      nonzero += rec.nonzero;
      total += rec.numel;
    }
  }
  if (!per_layer.empty()) {
    double sum = 0.0;
    for (const auto& [layer, acc] : per_layer) sum += acc.first / static_cast<double>(acc.second);
    r.average_activation_bits = sum / static_cast<double>(per_layer.size());
    r.activation_nonzero_fraction = static_cast<double>(nonzero) / static_cast<double>(total);
    r.activations_quantized = true;
  }
  return r;
}

std::vector<SweepRow> run_sweep(const ModelGraph& model, const Dataset& dataset, const SweepOptions& options) {
  if (options.k_grid.empty() || options.seeds.empty()) throw std::invalid_argument("sweep grid is empty");
  std::vector<SweepRow> rows(options.k_grid.size() * options.seeds.size());
  for (std::size_t k = 0; k < options.k_grid.size(); ++k)
    for (std::size_t s = 0; s < options.seeds.size(); ++s) {
      auto& row = rows[k * options.seeds.size() + s];
      row.K = options.k_grid[k];
      row.seed = options.seeds[s];
    }

  parallel_for(rows.size(), options.threads, [&](std::size_t cell) {
    SweepRow& row = rows[cell];
    try {
      SamplingConfig cfg = options.base;
      cfg.K_weights = row.K;
      cfg.K_activations = row.K;
      cfg.seed = row.seed;
      const auto quantized = quantize_model(model, cfg);

      InferenceOptions inf;
      inf.quantize_activations = options.quantize_activations;
      inf.quantize_input = options.quantize_input;
      inf.K_activations = row.K;
      inf.sort = cfg.sort;
      inf.seed = row.seed;
      const EvalResult eval = evaluate(quantized.model, dataset, inf);

      row.accuracy = eval.accuracy;
      row.average_weight_bits = quantized.report.average_weight_bits;
      row.average_activation_bits = eval.average_activation_bits;
      row.weight_nonzero_pct = 100.0 * quantized.report.weight_nonzero_fraction;
      row.activation_nonzero_pct = 100.0 * eval.activation_nonzero_fraction;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  return rows;
}

namespace {

std::string csv_field(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

} // namespace

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "K,seed,status,accuracy,avg_weight_bits,avg_activation_bits,weight_nonzero_pct,activation_nonzero_pct,error\n";
  char buf[256];
  for (const auto& row : rows) {
    out += detail::format_double(row.K) + "," + std::to_string(row.seed) + ",";
    if (row.ok) {
      std::snprintf(buf, sizeof(buf), "ok,%.4f,%.4f,%.4f,%.4f,%.4f,\n", row.accuracy, row.average_weight_bits,
                    row.average_activation_bits, row.weight_nonzero_pct, row.activation_nonzero_pct);
      out += buf;
    } else {
      out += "error,,,,,," + csv_field(row.error) + "\n";
    }
  }
  return out;
}

} // namespace mcq
