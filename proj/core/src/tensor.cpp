#include "mcq/error.hpp"
#include "mcq/quantized_tensor.hpp"
#include "mcq/tensor.hpp"

#include <cmath>
#include <cstdlib>

namespace mcq {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string_view to_string(Granularity g) noexcept {
  return g == Granularity::layer ? "layer" : "neuron";
}

std::optional<Granularity> parse_granularity(std::string_view text) noexcept {
  if (text == "layer") return Granularity::layer;
  if (text == "neuron") return Granularity::neuron;
  return std::nullopt;
}

std::size_t neuron_group_count(const Shape& shape) {
  if (shape.size() == 2) return static_cast<std::size_t>(shape[1]);
  if (shape.size() >= 3) return static_cast<std::size_t>(shape[0]);
  return 1;
}

std::size_t neuron_group_of(const Shape& shape, std::size_t index) {
  if (shape.size() == 2) return index % static_cast<std::size_t>(shape[1]);
  if (shape.size() >= 3) return index / (shape_numel(shape) / static_cast<std::size_t>(shape[0]));
  return 0;
}

std::int64_t QuantizedTensor::max_abs_count() const noexcept {
  std::int64_t m = 0;
  for (auto c : counts) m = std::max<std::int64_t>(m, std::llabs(c));
  return m;
}

std::size_t QuantizedTensor::nonzero_count() const noexcept {
  std::size_t n = 0;
  for (auto c : counts) n += c != 0;
  return n;
}

Tensor QuantizedTensor::dequantize() const {
  std::vector<float> data(counts.size());
  if (granularity == Granularity::layer) {
    const double r = rescale();
    for (std::size_t i = 0; i < counts.size(); ++i) data[i] = static_cast<float>(counts[i] * r);
    return Tensor(shape, std::move(data));
  }
  for (std::size_t i = 0; i < counts.size(); ++i)
    data[i] = static_cast<float>(counts[i] * rescale(neuron_group_of(shape, i)));
  return Tensor(shape, std::move(data));
}

} // namespace mcq
