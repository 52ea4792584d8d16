#include "mcq/fixtures.hpp"
#include "mcq/inference.hpp"
#include "mcq/rng.hpp"

#include <algorithm>
#include <cmath>

namespace mcq {

namespace {

// Independent streams for the pieces of a fixture.
constexpr std::uint64_t kModelStream = 0x6D6F64656C000001ULL;
constexpr std::uint64_t kTrainStream = 0x747261696E000002ULL;
constexpr std::uint64_t kDataStream = 0x6461746173000003ULL;
constexpr std::uint64_t kDirectionStream = 0x6469726563000004ULL;

constexpr int kClasses = 4;
constexpr int kTrainPoints = 2000;
constexpr int kEpochs = 30;
constexpr std::size_t kBatch = 32;
constexpr double kLearningRate = 0.05;

Tensor gaussian_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(stddev * rng.next_gaussian());
  return t;
}

Layer dense_layer(std::string name, std::int64_t in, std::int64_t out, Rng& rng) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::dense;
  l.weights = gaussian_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  l.bias = gaussian_tensor({out}, 0.1, rng);
  return l;
}

Layer simple_layer(std::string name, LayerKind kind) {
  Layer l;
  l.name = std::move(name);
  l.kind = kind;
  return l;
}

/// Softmax cross-entropy training of a dense stack (ReLU between layers)
/// with minibatch SGD + momentum, in double precision. Deterministic: the
/// only randomness is the per-epoch shuffle drawn from `rng`.
struct DenseStack {
  std::vector<std::vector<double>> weights;  // [in, out] row-major
  std::vector<std::vector<double>> biases;
  std::vector<std::size_t> dims;             // dims[l] -> dims[l+1]

  explicit DenseStack(const std::vector<const Layer*>& layers) {
    for (const Layer* l : layers) {
      weights.emplace_back(l->weights->values().begin(), l->weights->values().end());
      biases.emplace_back(l->bias->values().begin(), l->bias->values().end());
      if (dims.empty()) dims.push_back(static_cast<std::size_t>(l->in_features()));
      dims.push_back(static_cast<std::size_t>(l->out_features()));
    }
  }

  /// Returns per-layer outputs (post-ReLU for hidden layers, logits last).
  std::vector<std::vector<double>> forward(const std::vector<double>& x) const {
    std::vector<std::vector<double>> acts{x};
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto& in = acts.back();
      std::vector<double> out(biases[l]);
      for (std::size_t i = 0; i < dims[l]; ++i) {
        if (in[i] == 0.0) continue;
        for (std::size_t j = 0; j < dims[l + 1]; ++j) out[j] += in[i] * weights[l][i * dims[l + 1] + j];
      }
      if (l + 1 < weights.size())
        for (auto& v : out) v = std::max(v, 0.0);
      acts.push_back(std::move(out));
    }
    return acts;
  }

  void train(const std::vector<std::vector<double>>& xs, const std::vector<int>& labels, int epochs,
             std::size_t batch, double lr, Rng& rng) {
    const double momentum = 0.9;
    auto vw = weights, vb = biases;
    for (auto& v : vw) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : vb) std::fill(v.begin(), v.end(), 0.0);
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
      }
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        auto gw = vw, gb = vb;
        for (auto& v : gw) std::fill(v.begin(), v.end(), 0.0);
        for (auto& v : gb) std::fill(v.begin(), v.end(), 0.0);

        for (std::size_t s = start; s < stop; ++s) {
          const auto acts = forward(xs[order[s]]);
          std::vector<double> delta = acts.back();
          const double peak = *std::max_element(delta.begin(), delta.end());
          double z = 0.0;
          for (auto& v : delta) z += (v = std::exp(v - peak));
          for (auto& v : delta) v /= z;
          delta[static_cast<std::size_t>(labels[order[s]])] -= 1.0;

          for (std::size_t l = weights.size(); l-- > 0;) {
            const auto& in = acts[l];
            const std::size_t outs = dims[l + 1];
            for (std::size_t j = 0; j < outs; ++j) gb[l][j] += delta[j];
            for (std::size_t i = 0; i < dims[l]; ++i) {
              if (in[i] == 0.0) continue;
              for (std::size_t j = 0; j < outs; ++j) gw[l][i * outs + j] += in[i] * delta[j];
            }
            if (l == 0) break;
            std::vector<double> prev(dims[l], 0.0);
            for (std::size_t i = 0; i < dims[l]; ++i) {
              if (in[i] <= 0.0) continue;  // ReLU gate
              for (std::size_t j = 0; j < outs; ++j) prev[i] += weights[l][i * outs + j] * delta[j];
            }
            delta = std::move(prev);
          }
        }

        const double step = lr / static_cast<double>(stop - start);
        for (std::size_t l = 0; l < weights.size(); ++l) {
          for (std::size_t k = 0; k < weights[l].size(); ++k) {
            vw[l][k] = momentum * vw[l][k] - step * gw[l][k];
            weights[l][k] += vw[l][k];
          }
          for (std::size_t k = 0; k < biases[l].size(); ++k) {
            vb[l][k] = momentum * vb[l][k] - step * gb[l][k];
            biases[l][k] += vb[l][k];
          }
        }
      }
    }
  }

  void store(const std::vector<Layer*>& layers) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = layers[l]->weights->values();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<float>(weights[l][k]);
      auto b = layers[l]->bias->values();
      for (std::size_t k = 0; k < b.size(); ++k) b[k] = static_cast<float>(biases[l][k]);
    }
  }
};

std::vector<double> to_doubles(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// ---- mlp-blobs -------------------------------------------------------------

constexpr std::int64_t kBlobDims = 16;
constexpr double kBlobDistance = 4.0;

std::vector<std::vector<double>> orthonormal_directions(Rng& rng) {
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < kClasses) {
    std::vector<double> v(kBlobDims);
    for (auto& x : v) x = rng.next_gaussian();
    for (const auto& d : dirs) {
      double dot = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * d[k];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * d[k];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

Tensor blob_point(const std::vector<double>& direction, Rng& rng) {
  Tensor t(Shape{kBlobDims});
  for (std::size_t k = 0; k < direction.size(); ++k)
    t[k] = static_cast<float>(kBlobDistance * direction[k] + rng.next_gaussian());
  return t;
}

Fixture make_mlp_blobs(std::uint64_t seed) {
  Rng dir_rng(seed ^ kDirectionStream);
  const auto dirs = orthonormal_directions(dir_rng);

  Rng model_rng(seed ^ kModelStream);
  Fixture f;
  f.model.input_shape = {kBlobDims};
  f.model.layers.push_back(dense_layer("fc1", kBlobDims, 32, model_rng));
  f.model.layers.push_back(simple_layer("relu1", LayerKind::relu));
  f.model.layers.push_back(dense_layer("fc2", 32, 32, model_rng));
  f.model.layers.push_back(simple_layer("relu2", LayerKind::relu));
  f.model.layers.push_back(dense_layer("fc3", 32, kClasses, model_rng));

  // Fitted on its own draw; the evaluation points are never seen.
  Rng train_rng(seed ^ kTrainStream);
  std::vector<std::vector<double>> train;
  std::vector<int> train_labels;
  for (int i = 0; i < kTrainPoints; ++i) {
    train_labels.push_back(i % kClasses);
    train.push_back(to_doubles(blob_point(dirs[static_cast<std::size_t>(i % kClasses)], train_rng)));
  }
  std::vector<Layer*> dense{&f.model.layers[0], &f.model.layers[2], &f.model.layers[4]};
  DenseStack stack({dense.begin(), dense.end()});
  stack.train(train, train_labels, kEpochs, kBatch, kLearningRate, train_rng);
  stack.store(dense);

  Rng data_rng(seed ^ kDataStream);
  f.dataset.name = "mlp-blobs";
  f.dataset.sample_shape = {kBlobDims};
  f.dataset.num_classes = kClasses;
  for (int i = 0; i < 2000; ++i) {
    f.dataset.labels.push_back(i % kClasses);
    f.dataset.inputs.push_back(blob_point(dirs[static_cast<std::size_t>(i % kClasses)], data_rng));
  }
  return f;
}

// ---- cnn-blobs -------------------------------------------------------------

constexpr std::int64_t kImage = 8;

Tensor stroke_image(int label, Rng& rng) {
  Tensor t(Shape{1, kImage, kImage});
  for (std::int64_t y = 0; y < kImage; ++y)
    for (std::int64_t x = 0; x < kImage; ++x) {
      bool on = false;
      switch (label) {
      case 0: on = y == 3 || y == 4; break;           // horizontal bar
      case 1: on = x == 3 || x == 4; break;           // vertical bar
      case 2: on = x == y || x == y + 1; break;       // diagonal
      default: on = x + y == 7 || x + y == 8; break;  // anti-diagonal
      }
      t[static_cast<std::size_t>(y * kImage + x)] = static_cast<float>((on ? 2.0 : 0.0) + 0.5 * rng.next_gaussian());
    }
  return t;
}

Fixture make_cnn_blobs(std::uint64_t seed) {
  Rng model_rng(seed ^ kModelStream);
  ModelGraph body;
  body.input_shape = {1, kImage, kImage};
  Layer conv;
  conv.name = "conv1";
  conv.kind = LayerKind::conv2d;
  conv.conv = ConvAttrs{1, 1};
  conv.weights = gaussian_tensor({8, 1, 3, 3}, 1.0 / 3.0, model_rng);
  conv.bias = gaussian_tensor({8}, 0.1, model_rng);
  body.layers.push_back(std::move(conv));
  body.layers.push_back(simple_layer("relu1", LayerKind::relu));
  Layer pool = simple_layer("pool1", LayerKind::maxpool2d);
  pool.pool = PoolAttrs{2, 2};
  body.layers.push_back(std::move(pool));
  body.layers.push_back(simple_layer("flatten", LayerKind::flatten));

  // Random convolutional features; only the readout is fitted.
  Fixture f;
  f.model = body;
  f.model.layers.push_back(dense_layer("fc", 8 * 4 * 4, kClasses, model_rng));

  Rng train_rng(seed ^ kTrainStream);
  std::vector<std::vector<double>> train;
  std::vector<int> train_labels;
  for (int i = 0; i < 800; ++i) {
    train_labels.push_back(i % kClasses);
    train.push_back(to_doubles(forward_full_precision(body, stroke_image(i % kClasses, train_rng))));
  }
  std::vector<Layer*> dense{&f.model.layers.back()};
  DenseStack stack({dense.begin(), dense.end()});
  stack.train(train, train_labels, kEpochs, kBatch, kLearningRate, train_rng);
  stack.store(dense);

  Rng data_rng(seed ^ kDataStream);
  f.dataset.name = "cnn-blobs";
  f.dataset.sample_shape = {1, kImage, kImage};
  f.dataset.num_classes = kClasses;
  for (int i = 0; i < 400; ++i) {
    f.dataset.labels.push_back(i % kClasses);
    f.dataset.inputs.push_back(stroke_image(i % kClasses, data_rng));
  }
  return f;
}

} // namespace

std::string_view to_string(FixtureKind kind) noexcept {
  return kind == FixtureKind::mlp_blobs ? "mlp-blobs" : "cnn-blobs";
}

std::optional<FixtureKind> parse_fixture_kind(std::string_view text) noexcept {
  if (text == "mlp-blobs") return FixtureKind::mlp_blobs;
  if (text == "cnn-blobs") return FixtureKind::cnn_blobs;
  return std::nullopt;
}

Fixture make_fixture(FixtureKind kind, std::uint64_t seed) {
  return kind == FixtureKind::mlp_blobs ? make_mlp_blobs(seed) : make_cnn_blobs(seed);
}

} // namespace mcq
