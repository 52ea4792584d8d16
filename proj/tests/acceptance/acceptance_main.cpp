// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <mcq/batchnorm.hpp>
#include <mcq/container.hpp>
#include <mcq/error.hpp>
#include <mcq/evaluation.hpp>
#include <mcq/fixtures.hpp>
#include <mcq/inference.hpp>
#include <mcq/normalizer.hpp>
#include <mcq/quantizer.hpp>
#include <mcq/sampler.hpp>

#include "support/oracles.hpp"

#ifdef MCQ_HAVE_CLI
#include "cli.hpp"
#endif

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace mcq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

nlohmann::json golden(const std::string& name) {
  std::ifstream in(std::string(MCQ_GOLDEN_DIR) + "/" + name);
  return nlohmann::json::parse(in);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_layer(std::mt19937_64& gen) {
  const std::int64_t in = 1 + static_cast<std::int64_t>(gen() % 96), out = 1 + static_cast<std::int64_t>(gen() % 48);
  Tensor t({in, out});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double zeros = u(gen) * 0.5;
  for (auto& v : t.values()) v = u(gen) < zeros ? 0.0f : normal(gen);
  t[0] = 1.0f;  // never all zero
  return t;
}

// 1 ---------------------------------------------------------------------------
Outcome conservation() {
  std::mt19937_64 gen(1);
  std::size_t checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Tensor w = random_layer(gen);
    const double K = std::ldexp(1.0, static_cast<int>(gen() % 7) - 3) * (1.0 + static_cast<double>(gen() % 1000) / 1000.0);
    const bool sort = gen() & 1;
    const NormalizedView view = normalize(w);
    Rng rng(gen());
    const QuantizedTensor q = quantize_tensor(w, TensorSampling{K, sort}, rng);
    if (q.sample_count != static_cast<std::int64_t>(std::ceil(K * static_cast<double>(w.numel()) - 1e-9)))
      return {false, "N != ceil(K n) at trial " + std::to_string(trial)};
    std::int64_t total = 0;
    const double n = static_cast<double>(q.sample_count), r = q.rescale();
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const std::int64_t c = std::abs(q.counts[i]);
      total += c;
      const double np = view.probs[i] * n;
      if (c < std::floor(np - 1e-9) || c > std::ceil(np + 1e-9))
        return {false, "count outside {floor(Np), ceil(Np)} at trial " + std::to_string(trial)};
      if (std::fabs(static_cast<double>(c) * r - std::fabs(w[i])) > r * (1 + 1e-9))
        return {false, "reconstruction error above f/N at trial " + std::to_string(trial)};
      ++checked;
    }
    if (total != q.sample_count) return {false, "sum |counts| != N at trial " + std::to_string(trial)};
  }
  return {true, "10000 cases, " + std::to_string(checked) + " values"};
}

// 2 ---------------------------------------------------------------------------
Outcome oracle_equivalence() {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 2000;
    const auto probs = testing::random_probs(gen, n, (gen() % 3) * 0.25);
    std::vector<std::int8_t> signs(n);
    for (auto& s : signs) s = (gen() & 1) ? 1 : -1;
    Rng rng(gen());
    const SampleStream stream = sample_stream(n, 0.05 + static_cast<double>(gen() % 400) / 50.0, rng);
    for (bool sort : {false, true}) {
      const CdfPartition cdf = build_cdf(probs, sort);
      if (count_hits(cdf, stream, signs) != testing::count_hits_binary_search(cdf, stream, signs))
        return {false, "mismatch at trial " + std::to_string(trial) + (sort ? " (sorted)" : " (unsorted)")};
    }
  }
  return {true, "1000 cases x {unsorted, sorted}"};
}

// 3 ---------------------------------------------------------------------------
Outcome scale_invariance() {
  std::mt19937_64 gen(3);
  double worst = 0.0;
  for (int layer = 0; layer < 100; ++layer) {
    const Tensor w = random_layer(gen);
    const std::uint64_t seed = gen();
    const bool sort = layer % 2;
    Rng base_rng(seed);
    const QuantizedTensor base = quantize_tensor(w, TensorSampling{1.0, sort}, base_rng);
    for (double c : {0.01, 1.0, 137.0}) {
      Tensor scaled(w.shape());
      for (std::size_t i = 0; i < w.numel(); ++i) scaled[i] = static_cast<float>(w[i] * c);
      Rng rng(seed);
      const QuantizedTensor q = quantize_tensor(scaled, TensorSampling{1.0, sort}, rng);
      if (q.counts != base.counts) return {false, "counts differ for layer " + std::to_string(layer) + ", c=" + fmt("%g", c)};
      const double rel = std::fabs(q.scale_f - c * base.scale_f) / (c * base.scale_f);
      worst = std::max(worst, rel);
      if (rel > 1e-7) return {false, "scale_f off by " + fmt("%.3g", rel) + " relative"};
    }
  }
  return {true, "100 layers x c in {0.01, 1, 137}, worst scale_f error " + fmt("%.2g", worst)};
}

// 4 ---------------------------------------------------------------------------
Outcome bit_widths() {
  for (std::int32_t m = 1; m <= 1024; ++m) {
    const int floor_log2 = static_cast<int>(std::floor(std::log2(static_cast<double>(m))));
    const std::vector<std::int32_t> pos{m, 0}, neg{0, -m};
    if (bit_width(pos) != floor_log2 + 2 || bit_width(neg) != floor_log2 + 2)
      return {false, "weight bits wrong for max " + std::to_string(m)};
    if (bit_width(pos, ValueKind::activations) != floor_log2 + 1)
      return {false, "activation bits wrong for max " + std::to_string(m)};
  }
  const std::vector<std::int32_t> eight{8, 3};
  if (bit_width(eight, ValueKind::activations) != 4) return {false, "activation max 8 != 4 bits"};
  return {true, "max counts 1..1024, weights and activations"};
}

double quantized_accuracy(const Fixture& f, double K, std::uint64_t seed) {
  SamplingConfig cfg;
  cfg.K_weights = cfg.K_activations = K;
  cfg.seed = seed;
  const QuantizeResult qr = quantize_model(f.model, cfg, threads());
  InferenceOptions opt;
  opt.K_activations = K;
  opt.seed = seed;
  return evaluate(qr.model, f.dataset, opt, threads()).accuracy;
}

// 5 ---------------------------------------------------------------------------
Outcome end_to_end() {
  const auto g = golden("mlp_blobs_seed7.json");
  const Fixture f = make_fixture(FixtureKind::mlp_blobs, 7);
  const double a_fp = evaluate(f.model, f.dataset, InferenceOptions{}, threads()).accuracy;
  if (a_fp != g["accuracy"].get<double>()) return {false, "A_fp " + fmt("%.2f", a_fp) + " differs from golden"};
  const double k1 = quantized_accuracy(f, 1.0, 42), k8 = quantized_accuracy(f, 8.0, 42);
  const std::string detail =
      "A_fp " + fmt("%.2f", a_fp) + ", K=1 " + fmt("%.2f", k1) + " (>= " + fmt("%.2f", a_fp - 2.0) + "), K=8 " +
      fmt("%.2f", k8) + " (>= " + fmt("%.2f", a_fp - 0.5) + ")";
  return {k1 >= a_fp - 2.0 && k8 >= a_fp - 0.5, detail};
}

// 6 ---------------------------------------------------------------------------
Outcome k_sweep() {
  const Fixture f = make_fixture(FixtureKind::mlp_blobs, 7);
  SweepOptions opt;
  opt.k_grid = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  opt.seeds = {42, 43, 44, 45, 46};
  opt.threads = threads();
  const auto rows = run_sweep(f.model, f.dataset, opt);
  std::vector<double> acc(opt.k_grid.size(), 0.0), nonzero(opt.k_grid.size(), 0.0);
  for (std::size_t k = 0; k < opt.k_grid.size(); ++k)
    for (std::size_t s = 0; s < opt.seeds.size(); ++s) {
      const SweepRow& row = rows[k * opt.seeds.size() + s];
      if (!row.ok) return {false, "sweep cell failed: " + row.error};
      acc[k] += row.accuracy / static_cast<double>(opt.seeds.size());
      nonzero[k] += row.weight_nonzero_pct / static_cast<double>(opt.seeds.size());
    }
  int inversions = 0;
  bool ok = true;
  std::string detail = "mean acc";
  for (std::size_t k = 0; k < acc.size(); ++k) {
    detail += " " + fmt("%.2f", acc[k]);
    if (k == 0) continue;
    if (acc[k] < acc[k - 1]) {
      ++inversions;
      if (acc[k - 1] - acc[k] > 0.5) ok = false;
    }
    if (nonzero[k] < nonzero[k - 1]) ok = false;
  }
  detail += "; nonzero% " + fmt("%.1f", nonzero.front()) + " -> " + fmt("%.1f", nonzero.back()) + "; inversions " +
            std::to_string(inversions);
  return {ok && inversions <= 1, detail};
}

// 7 ---------------------------------------------------------------------------
Outcome seed_variance() {
  const Fixture f = make_fixture(FixtureKind::mlp_blobs, 7);
  SweepOptions opt;
  opt.k_grid = {1.0};
  for (std::uint64_t s = 42; s < 52; ++s) opt.seeds.push_back(s);
  opt.threads = threads();
  double lo = 1e9, hi = -1e9;
  for (const auto& row : run_sweep(f.model, f.dataset, opt)) {
    if (!row.ok) return {false, "sweep cell failed: " + row.error};
    lo = std::min(lo, row.accuracy);
    hi = std::max(hi, row.accuracy);
  }
  return {hi - lo <= 1.5, "10 seeds at K=1: " + fmt("%.2f", lo) + ".." + fmt("%.2f", hi) + ", spread " + fmt("%.2f", hi - lo)};
}

// 8 ---------------------------------------------------------------------------
Outcome pipelines() {
  const Fixture f = make_fixture(FixtureKind::cnn_blobs, 7);
  SamplingConfig cfg;
  cfg.seed = 42;
  const QuantizeResult qr = quantize_model(f.model, cfg);
  InferenceOptions rescale, deferred;
  rescale.seed = deferred.seed = 42;
  deferred.pipeline = Pipeline::deferred;
  double worst = 0.0;
  for (std::size_t i = 0; i < f.dataset.size(); ++i) {
    const Tensor a = forward_quantized(qr.model, f.dataset.inputs[i], rescale, i).logits;
    const Tensor b = forward_quantized(qr.model, f.dataset.inputs[i], deferred, i).logits;
    for (std::size_t k = 0; k < a.numel(); ++k)
      worst = std::max(worst, static_cast<double>(std::fabs(a[k] - b[k]) / std::max({1.0f, std::fabs(a[k]), std::fabs(b[k])})));
  }

  // every sample lands on one weight and one input
  ModelGraph hot;
  hot.input_shape = {4};
  Layer l;
  l.name = "hot";
  l.kind = LayerKind::dense;
  l.weights = Tensor({4, 1}, {1, 0, 0, 0});
  hot.layers = {l};
  SamplingConfig big;
  big.K_weights = 1 << 24;
  InferenceOptions opt;
  opt.quantize_input = true;
  opt.K_activations = 1 << 20;
  bool rejected = false;
  try {
    forward_quantized(quantize_model(hot, big).model, Tensor({4}, {1, 0, 0, 0}), opt);
  } catch (const OverflowError&) {
    rejected = true;
  }
  return {worst <= 1e-4 && rejected, "max relative logit gap " + fmt("%.2g", worst) + " over " +
                                         std::to_string(f.dataset.size()) + " samples; adversarial layer " +
                                         (rejected ? "rejected" : "accepted")};
}

// 9 ---------------------------------------------------------------------------
std::uint64_t fnv1a(const std::vector<std::int32_t>& counts, std::uint64_t h) {
  for (std::int32_t c : counts)
    for (int b = 0; b < 4; ++b) {
      h ^= (static_cast<std::uint32_t>(c) >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  return h;
}

Outcome determinism() {
  Rng r(0);
  const std::uint64_t expect[] = {0xe220a8397b1dcdafULL, 0x6e789e6aa1b965f4ULL, 0x06c45d188009454fULL,
                                  0xf88bb8a8724c81ecULL};
  for (auto e : expect)
    if (r.next_u64() != e) return {false, "SplitMix64 reference vector mismatch"};

  SamplingConfig cfg;
  cfg.seed = 42;
  cfg.sort = true;
  const QuantizeResult qr = quantize_model(make_fixture(FixtureKind::mlp_blobs, 7).model, cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : qr.model.layers)
    if (layer.quantized) h = fnv1a(layer.quantized->counts, h);
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(h));
  const std::string frozen = golden("counts_digest.json")["mlp_blobs_seed7_k1_seed42_sort"].get<std::string>();
  if (digest != frozen) return {false, std::string("count digest ") + digest + " != golden " + frozen};

#ifdef MCQ_HAVE_CLI
  const auto dir = testing::scratch_dir("acceptance-determinism");
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  if (run({"make-fixture", dir.string()}) != 0) return {false, "make-fixture failed"};
  const std::string model = (dir / "mlp-blobs.mcqm").string(), data = (dir / "mlp-blobs.mcqd").string();
  for (const char* name : {"qa", "qb"})
    if (run({"quantize", model, (dir / name).string(), "--k", "1", "--seed", "42", "--sort"}) != 0)
      return {false, "quantize failed"};
  if (!testing::same_tree(dir / "qa", dir / "qb")) return {false, "quantize reruns differ"};
  for (const char* name : {"a.csv", "b.csv"})
    if (run({"sweep", model, data, "--k-grid", "0.5,1,2", "--seeds", "0:2", "--out", (dir / name).string()}) != 0)
      return {false, "sweep failed"};
  if (testing::read_bytes(dir / "a.csv") != testing::read_bytes(dir / "b.csv")) return {false, "sweep reruns differ"};
  return {true, std::string("SplitMix64 vectors, count digest ") + digest + ", quantize and sweep reruns byte-identical"};
#else
  return {true, std::string("SplitMix64 vectors, count digest ") + digest + " (CLI reruns not built)"};
#endif
}

// 10 --------------------------------------------------------------------------
Outcome batchnorm_folding() {
  std::mt19937_64 gen(10);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<float> positive(0.5f, 2.0f);
  ModelGraph m;
  m.input_shape = {3, 8, 8};
  Layer conv;
  conv.name = "conv";
  conv.kind = LayerKind::conv2d;
  conv.conv = {1, 1};
  conv.weights = Tensor({8, 3, 3, 3});
  conv.bias = Tensor({8});
  for (auto& v : conv.weights->values()) v = normal(gen);
  for (auto& v : conv.bias->values()) v = normal(gen);
  Layer bn;
  bn.name = "bn";
  bn.kind = LayerKind::batchnorm;
  BatchNormParams p;
  p.epsilon = 1e-5;
  p.gamma = p.beta = p.mean = p.var = Tensor({8});
  for (auto& v : p.gamma.values()) v = positive(gen);
  for (auto& v : p.beta.values()) v = normal(gen);
  for (auto& v : p.mean.values()) v = normal(gen);
  for (auto& v : p.var.values()) v = positive(gen);
  bn.batchnorm = p;
  Layer relu;
  relu.name = "relu";
  relu.kind = LayerKind::relu;
  m.layers = {conv, bn, relu};

  const ModelGraph folded = fold_batchnorm(m);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x({3, 8, 8});
    for (auto& v : x.values()) v = normal(gen);
    const Tensor a = forward_full_precision(m, x), b = forward_full_precision(folded, x);
    for (std::size_t i = 0; i < a.numel(); ++i)
      worst = std::max(worst, static_cast<double>(std::fabs(a[i] - b[i]) / std::max(1.0f, std::fabs(a[i]))));
  }
  return {worst <= 1e-5, "100 inputs, max relative gap " + fmt("%.2g", worst)};
}

} // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 = none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "conservation", 30, conservation},
      {2, "scan vs binary-search oracle", 10, oracle_equivalence},
      {3, "scale invariance", 0, scale_invariance},
      {4, "bit-width formula", 0, bit_widths},
      {5, "end-to-end fixture accuracy", 60, end_to_end},
      {6, "K-sweep monotonicity", 0, k_sweep},
      {7, "seed variance", 0, seed_variance},
      {8, "deferred pipeline and overflow guard", 0, pipelines},
      {9, "determinism", 0, determinism},
      {10, "batchnorm folding", 0, batchnorm_folding},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    failures += !o.pass;
    std::printf("[%s] AC%d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
