#pragma once

#include "mcq/model.hpp"

namespace mcq {

/// Absorbs every batchnorm layer into the dense or conv2d layer directly in
/// front of it: w' = w*s, b' = (b - mean)*s + beta with
/// s = gamma / sqrt(var + eps), per output channel. A missing bias is
/// treated as zero. Throws ShapeError if a batchnorm has no such
/// predecessor or its predecessor is already quantized.
ModelGraph fold_batchnorm(const ModelGraph& model);

} // namespace mcq
