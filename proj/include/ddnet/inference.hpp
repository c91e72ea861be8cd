// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "ddnet/model.hpp"

namespace ddnet {

inline constexpr int kTileOverlap = 32;

/// Whole-image enhancement of an RGB image of any size: the LoG map is taken
/// on the original image, both inputs are reflect-padded to the model's
/// spatial multiple, and the output is cropped back.
ForwardOutput enhance_full(const Model& model, const Image& low);
inline Image enhance_image(const Model& model, const Image& low) { return enhance_full(model, low).final; }

/// Real-image margin each tile is run with before it is cropped back.
inline constexpr int kTileContext = 32;

/// Overlapping tiles of at most `tile` x `tile` pixels, blended with linear
/// feathering across the overlap. Layer norms in every tile use one set of
/// statistics: from a whole-image pass when that fits the memory budget,
/// otherwise pooled from a first pass over the tiles.
Image enhance_tiled(const Model& model, const Image& low, int tile, int overlap = kTileOverlap);

/// Combines per-part layer-norm statistics as if taken over the union of the
/// parts, each part weighted by its pixel count.
NormStatistics pool_statistics(const std::vector<NormStatistics>& parts, const std::vector<double>& weights);

/// Rough peak working set of enhance_image() in bytes.
std::size_t estimate_inference_bytes(const ModelConfig& config, int height, int width);

/// Budget from DDNET_MEMORY_BUDGET_MB (default 3072 MB).
std::size_t memory_budget_bytes();

/// Throws a resource error suggesting --tile when a whole-image pass would
/// exceed the memory budget.
void check_memory_budget(const ModelConfig& config, int height, int width);

}  // namespace ddnet
