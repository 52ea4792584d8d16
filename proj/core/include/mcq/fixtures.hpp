#pragma once

#include "mcq/dataset.hpp"
#include "mcq/model.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace mcq {

enum class FixtureKind { mlp_blobs, cnn_blobs };

std::string_view to_string(FixtureKind kind) noexcept;
std::optional<FixtureKind> parse_fixture_kind(std::string_view text) noexcept;

struct Fixture {
  ModelGraph model;
  Dataset dataset;
};

/// Synthetic model plus evaluation set, a pure function of (kind, seed).
///
/// mlp-blobs: dense(16->32)-relu-dense(32->32)-relu-dense(32->4), weights
/// initialised Gaussian with std 1/sqrt(fan_in). Inputs are four Gaussian
/// blobs (sigma 1), class c centred 4 sigma from the origin along its own
/// orthonormal direction. The network is fitted with a short fixed-order
/// SGD run on a separate training draw. 2000 evaluation points.
///
/// cnn-blobs: conv(8x1x3x3, pad 1)-relu-maxpool2-flatten-dense(128->4) on
/// 1x8x8 images with one noisy stroke pattern per class. Conv kernels stay
/// random; only the dense readout is fitted. 400 evaluation points.
Fixture make_fixture(FixtureKind kind, std::uint64_t seed);

} // namespace mcq
