#include "mcq/report.hpp"

#include "io_util.hpp"

#include <json.hpp>

namespace mcq {

using json = nlohmann::ordered_json;

std::string report_to_json(const QuantReport& report) {
  const auto& cfg = report.config;
  json config{{"K_weights", cfg.K_weights},
              {"K_activations", cfg.K_activations},
              {"seed", cfg.seed},
              {"sort", cfg.sort},
              {"granularity", std::string(to_string(cfg.granularity))},
              {"skip_first_layer", cfg.skip_first_layer},
              {"skip_last_layer", cfg.skip_last_layer}};

  json layers = json::array();
  for (const auto& rec : report.layers) {
    json entry{{"name", rec.name},
               {"kind", rec.kind},
               {"precision", rec.quantized ? "int" : "fp32"},
               {"numel", rec.numel}};
    if (rec.quantized) {
      entry["N"] = rec.sample_count;
      entry["scale_f"] = rec.scale_f;
      entry["bit_width"] = rec.bit_width;
      entry["nonzero_fraction"] = rec.nonzero_fraction;
      entry["max_abs_count"] = rec.max_abs_count;
    }
    layers.push_back(entry);
  }

  json doc{{"schema", "mcq-quant-report/1"},
           {"config", config},
           {"layers", layers},
           {"aggregate",
            {{"quantized_layers", report.quantized_layer_count},
             {"average_weight_bits", report.average_weight_bits},
             {"weight_nonzero_fraction", report.weight_nonzero_fraction},
             {"weight_sparsity", report.weight_sparsity}}}};
  return doc.dump(2) + "\n";
}

void write_report(const QuantReport& report, const std::filesystem::path& path) {
  detail::write_file(path, report_to_json(report));
}

} // namespace mcq
