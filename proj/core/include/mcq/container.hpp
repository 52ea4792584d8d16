#pragma once

#include "mcq/model.hpp"

#include <filesystem>

namespace mcq {

/// Model container layout
/// ----------------------
/// A directory holding `manifest.json` plus one raw little-endian blob per
/// tensor. The manifest lists, in graph order, each layer's name, kind,
/// attrs and tensors (shape, dtype tag "f32" or "i32", blob file name).
/// Quantized layers store their hit counts as an "i32" `weights` tensor and
/// carry `scale_f` (shortest round-trip decimal string), `N` and
/// `bit_width`. Biases always stay "f32".
///
/// Writing is deterministic: the same model always yields the same bytes.

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr int kContainerVersion = 1;

/// Reads and validates a container. Throws FormatError on malformed
/// manifests, blob length mismatches, non-finite values or unknown kinds.
ModelGraph load_model(const std::filesystem::path& dir);

/// Writes any model, full-precision or (partially) quantized.
void save_model(const ModelGraph& model, const std::filesystem::path& dir);

/// Writes a quantized model. Every quantizable layer must carry either a
/// QuantizedTensor or full-precision weights (layers excluded by skip flags);
/// at least one must be quantized, and each QuantizedTensor must have a
/// positive scale factor and sample count.
void save_quantized(const ModelGraph& model, const std::filesystem::path& dir);

} // namespace mcq
