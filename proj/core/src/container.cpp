#include "mcq/container.hpp"
#include "mcq/error.hpp"
#include "mcq/quantizer.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>

namespace mcq {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormatTag = "mcq-model";

json shape_json(const Shape& shape) {
  json arr = json::array();
  for (auto d : shape) arr.push_back(d);
  return arr;
}

std::string blob_name(std::size_t index, const Layer& layer, const char* tensor) {
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "%03zu_", index);
  return prefix + detail::sanitize_file_stem(layer.name) + "." + tensor + ".bin";
}

json write_f32(const fs::path& dir, const std::string& blob, const Tensor& t) {
  detail::write_file(dir / blob, detail::encode_le<float>(t.values()));
  return json{{"shape", shape_json(t.shape())}, {"dtype", "f32"}, {"blob", blob}};
}

json write_i32(const fs::path& dir, const std::string& blob, const Shape& shape,
               const std::vector<std::int32_t>& counts) {
  detail::write_file(dir / blob, detail::encode_le<std::int32_t>(counts));
  return json{{"shape", shape_json(shape)}, {"dtype", "i32"}, {"blob", blob}};
}

void check_quantized(const Layer& layer) {
  const auto& q = *layer.quantized;
  if (!(q.scale_f > 0.0) || !std::isfinite(q.scale_f)) {
    throw Error("layer '" + layer.name + "': quantized weights have no positive scale_f");
  }
  if (q.sample_count <= 0 || q.group_samples <= 0) {
    throw Error("layer '" + layer.name + "': quantized weights have no sample count");
  }
  if (q.granularity == Granularity::neuron && q.group_scales.size() != neuron_group_count(q.shape)) {
    throw Error("layer '" + layer.name + "': group scale count does not match output neurons");
  }
}

void save_container(const ModelGraph& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    json entry{{"name", layer.name}, {"kind", std::string(to_string(layer.kind))}};

    json attrs = json::object();
    if (layer.kind == LayerKind::conv2d) {
      attrs["stride"] = layer.conv.stride;
      attrs["padding"] = layer.conv.padding;
    } else if (layer.kind == LayerKind::maxpool2d) {
      attrs["window"] = layer.pool.window;
      attrs["stride"] = layer.pool.stride;
    } else if (layer.kind == LayerKind::batchnorm && layer.batchnorm) {
      attrs["epsilon"] = detail::format_double(layer.batchnorm->epsilon);
    }
    entry["attrs"] = attrs;

    json tensors = json::object();
    if (layer.quantized) {
      check_quantized(layer);
      tensors["weights"] = write_i32(dir, blob_name(i, layer, "weights"), layer.quantized->shape,
                                     layer.quantized->counts);
    } else if (layer.weights) {
      tensors["weights"] = write_f32(dir, blob_name(i, layer, "weights"), *layer.weights);
    }
    if (layer.bias) tensors["bias"] = write_f32(dir, blob_name(i, layer, "bias"), *layer.bias);
    if (layer.batchnorm) {
      const auto& bn = *layer.batchnorm;
      tensors["gamma"] = write_f32(dir, blob_name(i, layer, "gamma"), bn.gamma);
      tensors["beta"] = write_f32(dir, blob_name(i, layer, "beta"), bn.beta);
      tensors["mean"] = write_f32(dir, blob_name(i, layer, "mean"), bn.mean);
      tensors["var"] = write_f32(dir, blob_name(i, layer, "var"), bn.var);
    }
    entry["tensors"] = tensors;

    if (layer.quantized) {
      const auto& q = *layer.quantized;
      entry["scale_f"] = detail::format_double(q.scale_f);
      entry["N"] = q.sample_count;
      entry["bit_width"] = q.bit_width;
      entry["granularity"] = std::string(to_string(q.granularity));
      if (q.granularity == Granularity::neuron) {
        entry["group_N"] = q.group_samples;
        json scales = json::array();
        for (double s : q.group_scales) scales.push_back(detail::format_double(s));
        entry["group_scales"] = scales;
      }
    }
    layers.push_back(entry);
  }

  json manifest{{"format", kFormatTag},
                {"version", kContainerVersion},
                {"quantized", model.is_quantized()},
                {"input_shape", shape_json(model.input_shape)},
                {"layers", layers}};
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file(dir / kManifestName, text);
}

// ---- loading ---------------------------------------------------------------

[[noreturn]] void malformed(const std::string& what) { throw FormatError("malformed manifest: " + what); }

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) malformed(where + " is missing '" + key + "'");
  return obj.at(key);
}

Shape read_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) malformed(where + " shape must be a non-empty array");
  Shape shape;
  for (const auto& d : j) {
    if (!d.is_number_integer() || d.get<std::int64_t>() <= 0) malformed(where + " has a non-positive dimension");
    shape.push_back(d.get<std::int64_t>());
  }
  return shape;
}

struct BlobRef {
  Shape shape;
  std::string dtype;
  fs::path path;
};

BlobRef read_blob_ref(const fs::path& dir, const json& j, const std::string& where) {
  BlobRef ref;
  ref.shape = read_shape(require(j, "shape", where), where);
  const auto& dtype = require(j, "dtype", where);
  const auto& blob = require(j, "blob", where);
  if (!dtype.is_string() || !blob.is_string()) malformed(where + " dtype and blob must be strings");
  ref.dtype = dtype.get<std::string>();
  if (ref.dtype != "f32" && ref.dtype != "i32") malformed(where + " has unknown dtype '" + ref.dtype + "'");
  const fs::path rel = blob.get<std::string>();
  if (rel.empty() || rel.is_absolute() || rel.filename() != rel) malformed(where + " blob must be a plain file name");
  ref.path = dir / rel;
  return ref;
}

std::vector<char> read_blob_bytes(const BlobRef& ref, const std::string& where) {
  const auto bytes = detail::read_file(ref.path);
  const std::size_t expected = shape_numel(ref.shape) * 4;
  if (bytes.size() != expected) {
    throw FormatError("blob length mismatch for " + where + ": " + ref.path.filename().string() + " has " +
                      std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  }
  return bytes;
}

Tensor load_f32(const fs::path& dir, const json& j, const std::string& where) {
  const BlobRef ref = read_blob_ref(dir, j, where);
  if (ref.dtype != "f32") malformed(where + " must be f32");
  Tensor t(ref.shape, detail::decode_le<float>(read_blob_bytes(ref, where)));
  if (!t.all_finite()) throw FormatError("non-finite values in " + where);
  return t;
}

std::int64_t read_int(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) malformed(where + " field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double read_decimal(const json& v, const std::string& where) {
  if (!v.is_string()) malformed(where + " must be a decimal string");
  return detail::parse_double(v.get<std::string>(), where);
}

QuantizedTensor load_quantized(const fs::path& dir, const json& entry, const json& weights,
                               const std::string& where) {
  const BlobRef ref = read_blob_ref(dir, weights, where + " weights");
  if (ref.dtype != "i32") malformed(where + " quantized weights must be i32");
  QuantizedTensor q;
  q.shape = ref.shape;
  q.counts = detail::decode_le<std::int32_t>(read_blob_bytes(ref, where + " weights"));
  q.scale_f = read_decimal(require(entry, "scale_f", where), where + " scale_f");
  q.sample_count = read_int(entry, "N", where);
  q.bit_width = static_cast<int>(read_int(entry, "bit_width", where));
  const std::string gran = entry.value("granularity", std::string("layer"));
  const auto g = parse_granularity(gran);
  if (!g) malformed(where + " has unknown granularity '" + gran + "'");
  q.granularity = *g;
  if (q.granularity == Granularity::neuron) {
    q.group_samples = read_int(entry, "group_N", where);
    const auto& scales = require(entry, "group_scales", where);
    if (!scales.is_array()) malformed(where + " group_scales must be an array");
    for (const auto& s : scales) q.group_scales.push_back(read_decimal(s, where + " group_scales"));
    if (q.group_scales.size() != neuron_group_count(q.shape)) malformed(where + " group_scales length");
    for (double s : q.group_scales)
      if (!(s > 0.0) || !std::isfinite(s)) malformed(where + " group scale must be positive");
  } else {
    q.group_samples = q.sample_count;
  }
  if (!(q.scale_f > 0.0) || !std::isfinite(q.scale_f)) malformed(where + " scale_f must be positive");
  if (q.sample_count <= 0 || q.group_samples <= 0) malformed(where + " N must be positive");

  std::int64_t total = 0;
  for (auto c : q.counts) total += std::llabs(c);
  if (total != q.sample_count) {
    throw FormatError(where + ": sum of |counts| is " + std::to_string(total) + " but N is " +
                      std::to_string(q.sample_count));
  }
  if (q.bit_width != bit_width(q.counts, ValueKind::weights)) {
    throw FormatError(where + ": bit_width " + std::to_string(q.bit_width) + " does not match the counts");
  }
  return q;
}

int read_attr(const json& attrs, const char* key, int fallback, const std::string& where) {
  if (!attrs.contains(key)) return fallback;
  if (!attrs.at(key).is_number_integer()) malformed(where + " attr '" + key + "' must be an integer");
  return attrs.at(key).get<int>();
}

} // namespace

ModelGraph load_model(const fs::path& dir) {
  if (!fs::exists(dir)) throw FormatError("model container not found: " + dir.string());
  const fs::path manifest_path = fs::is_directory(dir) ? dir / kManifestName : dir;
  const fs::path root = manifest_path.parent_path();
  const auto bytes = detail::read_file(manifest_path);
  json manifest;
  try {
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    malformed(std::string("not valid JSON (") + e.what() + ")");
  }
  if (!manifest.is_object()) malformed("top level must be an object");
  if (manifest.value("format", std::string()) != kFormatTag) malformed("format tag must be 'mcq-model'");
  if (read_int(manifest, "version", "manifest") != kContainerVersion) malformed("unsupported version");

  ModelGraph model;
  model.input_shape = read_shape(require(manifest, "input_shape", "manifest"), "input_shape");
  const auto& layers = require(manifest, "layers", "manifest");
  if (!layers.is_array()) malformed("'layers' must be an array");

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& entry = layers[i];
    const std::string where = "layer " + std::to_string(i);
    Layer layer;
    const auto& name = require(entry, "name", where);
    const auto& kind = require(entry, "kind", where);
    if (!name.is_string() || !kind.is_string()) malformed(where + " name and kind must be strings");
    layer.name = name.get<std::string>();
    const auto parsed = parse_layer_kind(kind.get<std::string>());
    if (!parsed) throw FormatError("unknown layer kind '" + kind.get<std::string>() + "' in " + where);
    layer.kind = *parsed;
    const std::string label = where + " ('" + layer.name + "')";

    const json attrs = entry.value("attrs", json::object());
    if (!attrs.is_object()) malformed(label + " attrs must be an object");
    const json tensors = entry.value("tensors", json::object());
    if (!tensors.is_object()) malformed(label + " tensors must be an object");

    switch (layer.kind) {
    case LayerKind::dense:
    case LayerKind::conv2d: {
      if (layer.kind == LayerKind::conv2d) {
        layer.conv.stride = read_attr(attrs, "stride", 1, label);
        layer.conv.padding = read_attr(attrs, "padding", 0, label);
      }
      const auto& weights = require(tensors, "weights", label + " tensors");
      if (weights.value("dtype", std::string()) == "i32") {
        layer.quantized = load_quantized(root, entry, weights, label);
      } else {
        layer.weights = load_f32(root, weights, label + " weights");
      }
      if (tensors.contains("bias")) layer.bias = load_f32(root, tensors.at("bias"), label + " bias");
      break;
    }
    case LayerKind::maxpool2d:
      layer.pool.window = read_attr(attrs, "window", 2, label);
      layer.pool.stride = read_attr(attrs, "stride", layer.pool.window, label);
      break;
    case LayerKind::batchnorm: {
      BatchNormParams bn;
      if (attrs.contains("epsilon")) bn.epsilon = read_decimal(attrs.at("epsilon"), label + " epsilon");
      bn.gamma = load_f32(root, require(tensors, "gamma", label), label + " gamma");
      bn.beta = load_f32(root, require(tensors, "beta", label), label + " beta");
      bn.mean = load_f32(root, require(tensors, "mean", label), label + " mean");
      bn.var = load_f32(root, require(tensors, "var", label), label + " var");
      layer.batchnorm = std::move(bn);
      break;
    }
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
    }
    model.layers.push_back(std::move(layer));
  }

  try {
    validate(model);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent shapes: ") + e.what());
  }
  return model;
}

void save_model(const ModelGraph& model, const fs::path& dir) { save_container(model, dir); }

void save_quantized(const ModelGraph& model, const fs::path& dir) {
  bool any = false;
  for (const auto& layer : model.layers) {
    if (!layer.is_quantizable()) continue;
    if (layer.quantized) {
      check_quantized(layer);
      any = true;
    } else if (!layer.weights) {
      throw Error("layer '" + layer.name + "' has neither quantized nor full-precision weights");
    }
  }
  if (!any) throw Error("model has no quantized layers");
  save_container(model, dir);
}

} // namespace mcq
