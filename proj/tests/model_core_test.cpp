#include <mcq/batchnorm.hpp>
#include <mcq/container.hpp>
#include <mcq/error.hpp>
#include <mcq/fixtures.hpp>
#include <mcq/inference.hpp>
#include <mcq/quantizer.hpp>

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace mcq {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

constexpr const char* kMinimalManifest = R"({
  "format": "mcq-model",
  "version": 1,
  "input_shape": [3],
  "layers": [
    {"name": "fc", "kind": "dense", "attrs": {},
     "tensors": {
       "weights": {"shape": [3, 2], "dtype": "f32", "blob": "w.bin"},
       "bias": {"shape": [2], "dtype": "f32", "blob": "b.bin"}}}
  ]
})";

fs::path minimal_container(const std::string& name) {
  const auto dir = scratch_dir(name);
  write_text(dir / "manifest.json", kMinimalManifest);
  write_floats(dir / "w.bin", {1, 2, 3, 4, 5, 6});
  write_floats(dir / "b.bin", {0.5f, -0.5f});
  return dir;
}

template <typename Fn>
std::string error_message(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "<no FormatError>";
}

TEST(LoadModel, MinimalDenseContainer) {
  const ModelGraph m = load_model(minimal_container("minimal"));
  ASSERT_EQ(m.layers.size(), 1u);
  EXPECT_EQ(m.input_shape, (Shape{3}));
  EXPECT_EQ(m.layers[0].kind, LayerKind::dense);
  EXPECT_EQ(m.layers[0].weights->shape(), (Shape{3, 2}));
  EXPECT_FLOAT_EQ((*m.layers[0].weights)[5], 6.0f);
  EXPECT_FLOAT_EQ((*m.layers[0].bias)[1], -0.5f);
}

TEST(LoadModel, BlobOneValueShort) {
  const auto dir = minimal_container("short-blob");
  write_floats(dir / "w.bin", {1, 2, 3, 4, 5});
  EXPECT_NE(error_message([&] { load_model(dir); }).find("blob length mismatch"), std::string::npos);
}

TEST(LoadModel, NonFiniteValuesRejected) {
  const auto dir = minimal_container("nan");
  write_floats(dir / "b.bin", {0.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_NE(error_message([&] { load_model(dir); }).find("non-finite"), std::string::npos);
  write_floats(dir / "b.bin", {std::numeric_limits<float>::infinity(), 0.0f});
  EXPECT_THROW(load_model(dir), FormatError);
}

TEST(LoadModel, UnknownLayerKind) {
  const auto dir = minimal_container("unknown-kind");
  std::string text = kMinimalManifest;
  text.replace(text.find("\"dense\""), 7, "\"lstm\"");
  write_text(dir / "manifest.json", text);
  EXPECT_NE(error_message([&] { load_model(dir); }).find("unknown layer kind"), std::string::npos);
}

TEST(LoadModel, MalformedManifests) {
  const auto dir = minimal_container("malformed");
  write_text(dir / "manifest.json", "{ not json");
  EXPECT_THROW(load_model(dir), FormatError);
  write_text(dir / "manifest.json", R"({"format": "mcq-model", "version": 1, "layers": []})");
  EXPECT_THROW(load_model(dir), FormatError);  // no input_shape
  std::string text = kMinimalManifest;
  text.replace(text.find("\"input_shape\": [3]"), 18, "\"input_shape\": [4]");
  write_text(dir / "manifest.json", text);
  EXPECT_THROW(load_model(dir), FormatError);  // shapes inconsistent
  EXPECT_THROW(load_model(dir / "missing"), FormatError);
}

TEST(LoadModel, FixtureIsFiveLayerGraph) {
  const auto dir = scratch_dir("fixture-load");
  const Fixture f = make_fixture(FixtureKind::mlp_blobs, 7);
  save_model(f.model, dir / "mlp-blobs.mcqm");
  const ModelGraph m = load_model(dir / "mlp-blobs.mcqm");
  ASSERT_EQ(m.layers.size(), 5u);
  EXPECT_EQ(m.input_shape, (Shape{16}));
  EXPECT_EQ(validate(m), (Shape{4}));
}

ModelGraph quantized_fixture(std::uint64_t seed, Granularity g = Granularity::layer) {
  SamplingConfig cfg;
  cfg.seed = seed;
  cfg.sort = true;
  cfg.granularity = g;
  cfg.skip_first_layer = true;
  return quantize_model(make_fixture(FixtureKind::mlp_blobs, 7).model, cfg).model;
}

void expect_bit_identical(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  EXPECT_EQ(std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(float)), 0);
}

TEST(SaveQuantized, RoundTripIsExact) {
  for (Granularity g : {Granularity::layer, Granularity::neuron}) {
    const auto dir = scratch_dir("roundtrip");
    const ModelGraph m = quantized_fixture(42, g);
    save_quantized(m, dir);
    const ModelGraph back = load_model(dir);
    ASSERT_EQ(back.layers.size(), m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      const Layer& a = m.layers[i];
      const Layer& b = back.layers[i];
      EXPECT_EQ(a.name, b.name);
      EXPECT_EQ(a.kind, b.kind);
      ASSERT_EQ(a.quantized.has_value(), b.quantized.has_value());
      if (a.quantized) {
        EXPECT_EQ(a.quantized->counts, b.quantized->counts);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(a.quantized->scale_f), std::bit_cast<std::uint64_t>(b.quantized->scale_f));
        EXPECT_EQ(*a.quantized, *b.quantized);
      }
      if (a.weights) expect_bit_identical(*a.weights, *b.weights);
      if (a.bias) expect_bit_identical(*a.bias, *b.bias);
    }
  }
}

TEST(SaveQuantized, RejectsMissingScale) {
  ModelGraph m = quantized_fixture(42);
  m.layers[2].quantized->scale_f = 0.0;
  EXPECT_THROW(save_quantized(m, scratch_dir("no-scale")), Error);
  m = quantized_fixture(42);
  m.layers[2].quantized->sample_count = 0;
  EXPECT_THROW(save_quantized(m, scratch_dir("no-n")), Error);
  EXPECT_THROW(save_quantized(make_fixture(FixtureKind::mlp_blobs, 7).model, scratch_dir("none")), Error);
}

TEST(SaveQuantized, RepeatedSavesAreByteIdentical) {
  const ModelGraph m = quantized_fixture(42);
  const auto a = scratch_dir("det-a"), b = scratch_dir("det-b");
  save_quantized(m, a);
  save_quantized(quantized_fixture(42), b);
  EXPECT_TRUE(testing::same_tree(a, b));
}

TEST(LoadModel, RejectsCountsThatBreakInvariants) {
  const auto dir = scratch_dir("bad-counts");
  ModelGraph m = quantized_fixture(42);
  m.layers[2].quantized->counts[0] += 1;  // sum |counts| != N
  save_quantized(m, dir);
  EXPECT_THROW(load_model(dir), FormatError);
}

// Property: arbitrary finite f32 bit patterns survive save/load unchanged.
TEST(SaveModel, RoundTripPreservesBitPatterns) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 20; ++trial) {
    ModelGraph m;
    const std::int64_t in = 1 + static_cast<std::int64_t>(gen() % 7), out = 1 + static_cast<std::int64_t>(gen() % 5);
    m.input_shape = {in};
    Layer l;
    l.name = "dense/" + std::to_string(trial);
    l.kind = LayerKind::dense;
    std::vector<float> w(static_cast<std::size_t>(in * out)), b(static_cast<std::size_t>(out));
    for (auto* v : {&w, &b})
      for (auto& x : *v) {
        float f;
        do f = std::bit_cast<float>(static_cast<std::uint32_t>(gen())); while (!std::isfinite(f));
        x = f;
      }
    l.weights = Tensor({in, out}, w);
    l.bias = Tensor({out}, b);
    m.layers.push_back(l);
    const auto dir = scratch_dir("bits");
    save_model(m, dir);
    const ModelGraph back = load_model(dir);
    expect_bit_identical(*back.layers[0].weights, Tensor({in, out}, w));
    expect_bit_identical(*back.layers[0].bias, Tensor({out}, b));
  }
}

// ---- batchnorm folding ------------------------------------------------------

Layer batchnorm(std::int64_t channels, float gamma, float beta, float mean, float var, double eps) {
  Layer bn;
  bn.name = "bn";
  bn.kind = LayerKind::batchnorm;
  BatchNormParams p;
  p.epsilon = eps;
  p.gamma = Tensor({channels}, std::vector<float>(static_cast<std::size_t>(channels), gamma));
  p.beta = Tensor({channels}, std::vector<float>(static_cast<std::size_t>(channels), beta));
  p.mean = Tensor({channels}, std::vector<float>(static_cast<std::size_t>(channels), mean));
  p.var = Tensor({channels}, std::vector<float>(static_cast<std::size_t>(channels), var));
  bn.batchnorm = p;
  return bn;
}

ModelGraph dense_then(Layer after) {
  ModelGraph m;
  m.input_shape = {2};
  Layer fc;
  fc.name = "fc";
  fc.kind = LayerKind::dense;
  fc.weights = Tensor({2, 2}, {1.5f, -2.0f, 0.25f, 3.0f});
  fc.bias = Tensor({2}, {0.5f, -1.0f});
  m.layers = {fc, std::move(after)};
  return m;
}

TEST(FoldBatchnorm, IdentityNormalizationLeavesWeights) {
  const ModelGraph m = dense_then(batchnorm(2, 1.0f, 0.0f, 0.0f, 1.0f, 0.0));
  const ModelGraph folded = fold_batchnorm(m);
  ASSERT_EQ(folded.layers.size(), 1u);
  EXPECT_EQ(*folded.layers[0].weights, *m.layers[0].weights);
  EXPECT_EQ(*folded.layers[0].bias, *m.layers[0].bias);
}

TEST(FoldBatchnorm, AnalyticScaleOfOne) {
  // gamma / sqrt(var + eps) = 2 / sqrt(3 + 1) = 1.
  const ModelGraph m = dense_then(batchnorm(2, 2.0f, 0.75f, 0.5f, 3.0f, 1.0));
  const ModelGraph folded = fold_batchnorm(m);
  EXPECT_EQ(*folded.layers[0].weights, *m.layers[0].weights);
  EXPECT_FLOAT_EQ((*folded.layers[0].bias)[0], (0.5f - 0.5f) * 1.0f + 0.75f);
  EXPECT_FLOAT_EQ((*folded.layers[0].bias)[1], (-1.0f - 0.5f) * 1.0f + 0.75f);
}

TEST(FoldBatchnorm, RequiresFoldablePredecessor) {
  ModelGraph m;
  m.input_shape = {2};
  m.layers = {batchnorm(2, 1, 0, 0, 1, 0)};
  EXPECT_THROW(fold_batchnorm(m), ShapeError);
  Layer relu;
  relu.name = "relu";
  relu.kind = LayerKind::relu;
  m = dense_then(relu);
  m.layers.push_back(batchnorm(2, 1, 0, 0, 1, 0));
  EXPECT_THROW(fold_batchnorm(m), ShapeError);
}

TEST(FoldBatchnorm, ConvOutputsPreservedOnRandomInputs) {
  std::mt19937_64 gen(5);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<float> uniform(0.5f, 2.0f);
  ModelGraph m;
  m.input_shape = {3, 6, 6};
  Layer conv;
  conv.name = "conv";
  conv.kind = LayerKind::conv2d;
  conv.conv = {1, 1};
  conv.weights = Tensor({8, 3, 3, 3});
  for (auto& v : conv.weights->values()) v = normal(gen);
  m.layers.push_back(conv);  // no bias: folding must create one
  Layer bn = batchnorm(8, 1, 0, 0, 1, 1e-3);
  for (auto& v : bn.batchnorm->gamma.values()) v = uniform(gen);
  for (auto& v : bn.batchnorm->beta.values()) v = normal(gen);
  for (auto& v : bn.batchnorm->mean.values()) v = normal(gen);
  for (auto& v : bn.batchnorm->var.values()) v = uniform(gen);
  m.layers.push_back(bn);

  const ModelGraph folded = fold_batchnorm(m);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x({3, 6, 6});
    for (auto& v : x.values()) v = normal(gen);
    const Tensor ref = forward_full_precision(m, x);
    const Tensor got = forward_full_precision(folded, x);
    for (std::size_t i = 0; i < ref.numel(); ++i)
      EXPECT_NEAR(got[i], ref[i], 1e-5 * std::max(1.0f, std::fabs(ref[i])));
  }
}

} // namespace
} // namespace mcq
