#include "mcq/dataset.hpp"
#include "mcq/error.hpp"

#include "io_util.hpp"

#include <json.hpp>

namespace mcq {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void Dataset::validate() const {
  if (inputs.size() != labels.size()) {
    throw FormatError("dataset '" + name + "': " + std::to_string(inputs.size()) + " inputs but " +
                      std::to_string(labels.size()) + " labels");
  }
  if (num_classes <= 0) throw FormatError("dataset '" + name + "': num_classes must be positive");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != sample_shape) throw FormatError("dataset '" + name + "': sample " + std::to_string(i) + " has the wrong shape");
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw FormatError("dataset '" + name + "': label " + std::to_string(labels[i]) + " out of range");
    }
  }
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("dataset container not found: " + dir.string());
  const auto bytes = detail::read_file(dir / kDatasetManifestName);
  json manifest;
  try {
    manifest = json::parse(bytes.begin(), bytes.end());
    Dataset ds;
    ds.name = manifest.at("name").get<std::string>();
    ds.sample_shape = manifest.at("sample_shape").get<Shape>();
    ds.num_classes = manifest.at("num_classes").get<int>();
    const auto count = manifest.at("count").get<std::size_t>();
    const std::size_t numel = shape_numel(ds.sample_shape);

    const auto input_bytes = detail::read_file(dir / manifest.at("inputs").get<std::string>());
    const auto label_bytes = detail::read_file(dir / manifest.at("labels").get<std::string>());
    if (input_bytes.size() != count * numel * 4 || label_bytes.size() != count * 4) {
      throw FormatError("blob length mismatch in dataset " + dir.string());
    }
    const auto values = detail::decode_le<float>(input_bytes);
    ds.labels = detail::decode_le<std::int32_t>(label_bytes);
    ds.inputs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Tensor t(ds.sample_shape, std::vector<float>(values.begin() + static_cast<std::ptrdiff_t>(i * numel),
                                                   values.begin() + static_cast<std::ptrdiff_t>((i + 1) * numel)));
      if (!t.all_finite()) throw FormatError("non-finite input in dataset sample " + std::to_string(i));
      ds.inputs.push_back(std::move(t));
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw FormatError("malformed dataset manifest " + (dir / kDatasetManifestName).string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  }
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  std::vector<float> values;
  values.reserve(dataset.size() * shape_numel(dataset.sample_shape));
  for (const auto& t : dataset.inputs) values.insert(values.end(), t.values().begin(), t.values().end());
  detail::write_file(dir / "inputs.bin", detail::encode_le<float>(values));
  detail::write_file(dir / "labels.bin", detail::encode_le<std::int32_t>(dataset.labels));

  json manifest{{"format", "mcq-dataset"},
                {"version", 1},
                {"name", dataset.name},
                {"sample_shape", dataset.sample_shape},
                {"num_classes", dataset.num_classes},
                {"count", dataset.size()},
                {"inputs", "inputs.bin"},
                {"labels", "labels.bin"}};
  detail::write_file(dir / kDatasetManifestName, manifest.dump(2) + "\n");
}

} // namespace mcq
