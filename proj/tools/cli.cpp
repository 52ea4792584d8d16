#include "cli.hpp"

#include <mcq/batchnorm.hpp>
#include <mcq/container.hpp>
#include <mcq/dataset.hpp>
#include <mcq/error.hpp>
#include <mcq/evaluation.hpp>
#include <mcq/fixtures.hpp>
#include <mcq/quantizer.hpp>
#include <mcq/report.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>

namespace mcq::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flag values detected after parsing.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

double parse_number(const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw UsageError("not a number: '" + text + "'");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Folds batchnorm layers when present; quantization needs them gone.
ModelGraph prepare(ModelGraph model) {
  const bool has_bn = std::any_of(model.layers.begin(), model.layers.end(),
                                  [](const Layer& l) { return l.kind == LayerKind::batchnorm; });
  return has_bn ? fold_batchnorm(model) : model;
}

struct QuantizeArgs {
  std::string model;
  std::string out;
  std::string report;
  double K = 1.0;
  double K_a = 1.0;
  unsigned long long seed = 0;
  bool sort = false;
  bool skip_first = false;
  bool skip_last = false;
  std::string granularity = "layer";
};

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string out;
  bool quantize_activations = false;
  bool quantize_input = false;
  bool sort = false;
  double K_a = 1.0;
  unsigned long long seed = 0;
  std::string pipeline = "rescale";
  std::optional<double> baseline;
};

struct SweepArgs {
  std::string model;
  std::string dataset;
  std::string out;
  std::string k_grid;
  std::string seeds = "0";
  bool sort = false;
  bool skip_first = false;
  bool skip_last = false;
  bool weights_only = false;
  bool quantize_input = false;
  std::string granularity = "layer";
};

struct FixtureArgs {
  std::string out;
  std::string spec = "mlp-blobs";
  unsigned long long seed = 7;
};

Granularity granularity_from(const std::string& text) {
  const auto g = parse_granularity(text);
  if (!g) throw UsageError("unknown granularity '" + text + "' (expected layer or neuron)");
  return *g;
}

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
  SamplingConfig cfg;
  cfg.K_weights = a.K;
  cfg.K_activations = a.K_a;
  cfg.seed = a.seed;
  cfg.sort = a.sort;
  cfg.skip_first_layer = a.skip_first;
  cfg.skip_last_layer = a.skip_last;
  cfg.granularity = granularity_from(a.granularity);

  const ModelGraph model = prepare(load_model(a.model));
  const QuantizeResult result = quantize_model(model, cfg, thread_budget());
  save_quantized(result.model, a.out);
  const fs::path report_path = a.report.empty() ? fs::path(a.out) / "report.json" : fs::path(a.report);
  write_text(report_path, report_to_json(result.report));

  for (const auto& rec : result.report.layers) {
    if (rec.quantized) {
      out << rec.name << ": " << rec.bit_width << " bits, N=" << rec.sample_count << ", nonzero "
          << 100.0 * rec.nonzero_fraction << "%\n";
    } else {
      out << rec.name << ": fp32\n";
    }
  }
  out << "average weight bits: " << result.report.average_weight_bits << "\n";
  out << "report: " << report_path.string() << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ModelGraph model = prepare(load_model(a.model));
  const Dataset dataset = load_dataset(a.dataset);

  InferenceOptions opts;
  opts.quantize_activations = a.quantize_activations;
  opts.quantize_input = a.quantize_input;
  opts.K_activations = a.K_a;
  opts.sort = a.sort;
  opts.seed = a.seed;
  if (a.pipeline == "rescale") {
    opts.pipeline = Pipeline::rescale_per_layer;
  } else if (a.pipeline == "deferred") {
    opts.pipeline = Pipeline::deferred;
  } else {
    throw UsageError("unknown pipeline '" + a.pipeline + "' (expected rescale or deferred)");
  }

  const EvalResult r = evaluate(model, dataset, opts, thread_budget());

  nlohmann::ordered_json doc{{"model", a.model},
                             {"dataset", dataset.name},
                             {"quantized_model", model.is_quantized()},
                             {"samples", r.samples},
                             {"correct", r.correct},
                             {"accuracy", r.accuracy},
                             {"activations_quantized", r.activations_quantized},
                             {"average_activation_bits", r.average_activation_bits},
                             {"activation_nonzero_fraction", r.activation_nonzero_fraction}};
  out << "accuracy: " << r.accuracy << "% (" << r.correct << "/" << r.samples << ")\n";
  if (r.activations_quantized) out << "average activation bits: " << r.average_activation_bits << "\n";
  if (a.baseline) {
    const double delta = r.accuracy - *a.baseline;
    doc["baseline"] = *a.baseline;
    doc["delta"] = delta;
    out << "delta vs baseline: " << delta << " points\n";
  }
  if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");
  return kOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  SweepOptions opts;
  opts.k_grid = parse_k_grid(a.k_grid);
  for (auto s : parse_seed_list(a.seeds)) opts.seeds.push_back(s);
  opts.base.sort = a.sort;
  opts.base.skip_first_layer = a.skip_first;
  opts.base.skip_last_layer = a.skip_last;
  opts.base.granularity = granularity_from(a.granularity);
  opts.quantize_activations = !a.weights_only;
  opts.quantize_input = a.quantize_input;
  opts.threads = thread_budget();

  const ModelGraph model = prepare(load_model(a.model));
  const Dataset dataset = load_dataset(a.dataset);
  const auto rows = run_sweep(model, dataset, opts);
  write_text(a.out, sweep_to_csv(rows));

  std::size_t errors = 0;
  for (std::size_t k = 0; k < opts.k_grid.size(); ++k) {
    double lo = 1e300, hi = -1e300, sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
      const auto& row = rows[k * opts.seeds.size() + s];
      if (!row.ok) {
        ++errors;
        continue;
      }
      lo = std::min(lo, row.accuracy);
      hi = std::max(hi, row.accuracy);
      sum += row.accuracy;
      ++ok;
    }
    out << "K=" << opts.k_grid[k];
    if (ok) {
      out << " mean accuracy " << sum / static_cast<double>(ok) << "%, spread " << hi - lo << " points";
    }
    if (ok < opts.seeds.size()) out << " (" << opts.seeds.size() - ok << " error cells)";
    out << "\n";
  }
  out << "wrote " << rows.size() << " rows to " << a.out << "\n";
  return errors ? kQuantizationError : kOk;
}

int cmd_make_fixture(const FixtureArgs& a, std::ostream& out) {
  const auto kind = parse_fixture_kind(a.spec);
  if (!kind) throw UsageError("unknown fixture spec '" + a.spec + "' (expected mlp-blobs or cnn-blobs)");
  const Fixture f = make_fixture(*kind, a.seed);
  const fs::path model_path = fs::path(a.out) / (a.spec + ".mcqm");
  const fs::path data_path = fs::path(a.out) / (a.spec + ".mcqd");
  save_model(f.model, model_path);
  save_dataset(f.dataset, data_path);
  out << "model: " << model_path.string() << "\n" << "dataset: " << data_path.string() << "\n";
  return kOk;
}

} // namespace

unsigned thread_budget() {
  if (const char* env = std::getenv("MCQ_THREADS")) {
    unsigned v = 0;
    const std::string text(env);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec == std::errc() && res.ptr == text.data() + text.size() && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> parse_k_grid(const std::string& text) {
  std::vector<double> grid;
  const auto range = split(text, ':');
  if (range.size() == 3) {
    const double start = parse_number(range[0]), stop = parse_number(range[1]), step = parse_number(range[2]);
    if (!(step > 0.0) || stop < start) throw UsageError("invalid K range '" + text + "'");
    const auto steps = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= steps; ++i) {
      // Round to 12 significant digits so 0.1 * 3 prints as 0.3.
      const double v = start + static_cast<double>(i) * step;
      grid.push_back(std::round(v * 1e12) / 1e12);
    }
  } else if (range.size() == 1) {
    for (const auto& part : split(text, ',')) grid.push_back(parse_number(part));
  } else {
    throw UsageError("invalid K grid '" + text + "'");
  }
  for (double k : grid)
    if (!(k > 0.0) || !std::isfinite(k)) throw UsageError("K values must be > 0");
  if (grid.empty()) throw UsageError("empty K grid");
  return grid;
}

std::vector<unsigned long long> parse_seed_list(const std::string& text) {
  auto parse_seed = [](const std::string& s) {
    unsigned long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw UsageError("invalid seed '" + s + "'");
    return v;
  };
  std::vector<unsigned long long> seeds;
  const auto range = split(text, ':');
  if (range.size() == 2) {
    const auto lo = parse_seed(range[0]), hi = parse_seed(range[1]);
    if (hi < lo) throw UsageError("invalid seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else if (range.size() == 1) {
    for (const auto& part : split(text, ',')) seeds.push_back(parse_seed(part));
  } else {
    throw UsageError("invalid seed list '" + text + "'");
  }
  return seeds;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo quantization toolkit", "mcq"};
  app.require_subcommand(1);

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Quantize a model container");
  quantize->add_option("model", qa.model, "Input model container")->required();
  quantize->add_option("out", qa.out, "Output container directory")->required();
  quantize->add_option("--k", qa.K, "Samples per weight (K)")->check(CLI::PositiveNumber);
  quantize->add_option("--k-a", qa.K_a, "Samples per activation, recorded in the report")->check(CLI::PositiveNumber);
  quantize->add_option("--seed", qa.seed, "Sampling seed");
  quantize->add_flag("--sort", qa.sort, "Sort values before building the CDF");
  quantize->add_flag("--skip-first", qa.skip_first, "Keep the first dense/conv layer in fp32");
  quantize->add_flag("--skip-last", qa.skip_last, "Keep the last dense/conv layer in fp32");
  quantize->add_option("--granularity", qa.granularity, "layer or neuron");
  quantize->add_option("--report", qa.report, "Report path (default: <out>/report.json)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate top-1 accuracy on a dataset");
  eval->add_option("model", ea.model, "Model container")->required();
  eval->add_option("dataset", ea.dataset, "Dataset container")->required();
  eval->add_flag("--quantize-activations", ea.quantize_activations, "Quantize activations online");
  eval->add_flag("--quantize-input", ea.quantize_input, "Also quantize the raw network input");
  eval->add_option("--k-a", ea.K_a, "Samples per activation")->check(CLI::PositiveNumber);
  eval->add_option("--seed", ea.seed, "Activation sampling seed");
  eval->add_flag("--sort", ea.sort, "Sort activations before building the CDF");
  eval->add_option("--pipeline", ea.pipeline, "rescale (per layer) or deferred");
  eval->add_option("--baseline", ea.baseline, "Baseline accuracy (%) to report a delta against");
  eval->add_option("--out", ea.out, "Write the result as JSON");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Accuracy and bit-width over a (K, seed) grid");
  sweep->add_option("model", sa.model, "Full-precision model container")->required();
  sweep->add_option("dataset", sa.dataset, "Dataset container")->required();
  sweep->add_option("--k-grid", sa.k_grid, "K values: start:stop:step or a,b,c")->required();
  sweep->add_option("--seeds", sa.seeds, "Seeds: lo:hi or a,b,c");
  sweep->add_option("--out", sa.out, "CSV output path")->required();
  sweep->add_flag("--sort", sa.sort, "Sort values before building the CDF");
  sweep->add_flag("--skip-first", sa.skip_first, "Keep the first dense/conv layer in fp32");
  sweep->add_flag("--skip-last", sa.skip_last, "Keep the last dense/conv layer in fp32");
  sweep->add_flag("--weights-only", sa.weights_only, "Do not quantize activations");
  sweep->add_flag("--quantize-input", sa.quantize_input, "Also quantize the raw network input");
  sweep->add_option("--granularity", sa.granularity, "layer or neuron");

  FixtureArgs fa;
  auto* fixture = app.add_subcommand("make-fixture", "Write a synthetic model and dataset");
  fixture->add_option("out", fa.out, "Output directory")->required();
  fixture->add_option("--spec", fa.spec, "mlp-blobs or cnn-blobs");
  fixture->add_option("--seed", fa.seed, "Generator seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (quantize->parsed()) return cmd_quantize(qa, out);
    if (eval->parsed()) return cmd_eval(ea, out);
    if (sweep->parsed()) return cmd_sweep(sa, out);
    if (fixture->parsed()) return cmd_make_fixture(fa, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DegenerateError& e) {
    err << "quantization error: " << e.what() << "\n";
    return kQuantizationError;
  } catch (const OverflowError& e) {
    err << "quantization error: " << e.what() << "\n";
    return kQuantizationError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsage;
}

} // namespace mcq::cli
