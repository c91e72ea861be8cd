// SPDX-License-Identifier: Apache-2.0
#include "ddnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include "ddnet/log_ops.hpp"

namespace ddnet {
namespace {

int round_up(int n, int d) { return (n + d - 1) / d * d; }

/// Reflect-pads to the model's spatial multiple, split evenly between the
/// two sides, runs the network and crops the centre back out.
ForwardOutput run_padded(const Model& model, const FeatureMap& low, const FeatureMap& grad, const NormHooks& hooks = {}) {
  const int d = model.config().divisor();
  const int h = low.height(), w = low.width();
  const int ph = round_up(h, d) - h, pw = round_up(w, d) - w;
  if (ph == 0 && pw == 0) return forward(model, Image(low), GradientMap(grad), hooks);

  const int top = ph / 2, left = pw / 2;
  auto pad = [&](const FeatureMap& m) { return pad_reflect(m, top, ph - top, left, pw - left); };
  auto out = forward(model, Image(pad(low)), GradientMap(pad(grad)), hooks);
  ForwardOutput cropped{Image(crop(out.final.planes(), top, left, h, w)), std::nullopt, std::nullopt};
  if (out.coarse) cropped.coarse = Image(crop(out.coarse->planes(), top, left, h, w));
  if (out.grad_pred) cropped.grad_pred = GradientMap(crop(out.grad_pred->planes(), top, left, h, w));
  return cropped;
}

/// Tile origins covering [0, extent) with at least `overlap` shared pixels.
std::vector<int> tile_origins(int extent, int tile, int overlap) {
  if (extent <= tile) return {0};
  std::vector<int> origins;
  const int stride = tile - overlap;
  for (int x = 0; x + tile < extent; x += stride) origins.push_back(x);
  origins.push_back(extent - tile);
  return origins;
}

/// Linear ramp on edges shared with a neighbouring tile, 1 elsewhere.
Eigen::VectorXf feather(int origin, int length, int extent, int overlap) {
  Eigen::VectorXf w(length);
  for (int i = 0; i < length; ++i) {
    float v = 1.0f;
    if (origin > 0) v = std::min(v, (i + 0.5f) / overlap);
    if (origin + length < extent) v = std::min(v, (length - i - 0.5f) / overlap);
    w(i) = v;
  }
  return w;
}

/// A tile and the larger window it is run on: kTileContext extra pixels of
/// real image on every side that has them.
struct TileWindow {
  int y, x, h, w;
  int cy, cx, ch, cw;
};

TileWindow tile_window(int y0, int x0, int tile, int height, int width) {
  TileWindow t{y0, x0, std::min(tile, height), std::min(tile, width), 0, 0, 0, 0};
  t.cy = std::max(0, y0 - kTileContext);
  t.cx = std::max(0, x0 - kTileContext);
  t.ch = std::min(height, y0 + t.h + kTileContext) - t.cy;
  t.cw = std::min(width, x0 + t.w + kTileContext) - t.cx;
  return t;
}

}  // namespace

ForwardOutput enhance_full(const Model& model, const Image& low) {
  require(low.channels() == 3, "enhance: RGB input required");
  const GradientMap grad = extract_gradient(low);
  return run_padded(model, low.planes(), grad.planes());
}

Image enhance_tiled(const Model& model, const Image& low, int tile, int overlap) {
  require(low.channels() == 3, "enhance: RGB input required");
  require(tile > 2 * overlap, "tile size must exceed twice the overlap (" + std::to_string(2 * overlap) + ")");
  const int h = low.height(), w = low.width();
  if (h <= tile && w <= tile) return enhance_image(model, low);

  const GradientMap grad = extract_gradient(low);
  std::vector<TileWindow> windows;
  for (int y0 : tile_origins(h, tile, overlap))
    for (int x0 : tile_origins(w, tile, overlap)) windows.push_back(tile_window(y0, x0, tile, h, w));
  auto run_tile = [&](const TileWindow& t, const NormHooks& hooks) {
    return run_padded(model, crop(low.planes(), t.cy, t.cx, t.ch, t.cw), crop(grad.planes(), t.cy, t.cx, t.ch, t.cw),
                      hooks);
  };

  // Layer norm is taken over the whole map, so every tile replays one set of
  // whole-image statistics rather than using its own.
  NormStatistics stats;
  if (estimate_inference_bytes(model.config(), h, w) <= memory_budget_bytes()) {
    run_padded(model, low.planes(), grad.planes(), {&stats, nullptr});
  } else {
    std::vector<NormStatistics> per_tile;
    std::vector<double> area;
    for (const auto& t : windows) {
      per_tile.emplace_back();
      run_tile(t, {&per_tile.back(), nullptr});
      area.push_back(double(t.ch) * t.cw);
    }
    stats = pool_statistics(per_tile, area);
  }
  const NormHooks replay{nullptr, &stats};

  FeatureMap acc(3, h, w);
  RowMatrix<float> weight = RowMatrix<float>::Zero(h, w);
  for (const auto& t : windows) {
    const auto out = run_tile(t, replay);
    const FeatureMap core = crop(out.final.planes(), t.y - t.cy, t.x - t.cx, t.h, t.w);
    const RowMatrix<float> wt = feather(t.y, t.h, h, overlap) * feather(t.x, t.w, w, overlap).transpose();
    for (int c = 0; c < 3; ++c) acc.plane(c).block(t.y, t.x, t.h, t.w).array() += core.plane(c).array() * wt.array();
    weight.block(t.y, t.x, t.h, t.w) += wt;
  }
  for (int c = 0; c < 3; ++c) acc.plane(c).array() /= weight.array();
  return Image::clamped(std::move(acc));
}

NormStatistics pool_statistics(const std::vector<NormStatistics>& parts, const std::vector<double>& weights) {
  require(!parts.empty() && parts.size() == weights.size(), "pool_statistics: one weight per part required");
  const std::size_t layers = parts.front().size();
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  NormStatistics out(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    double mean = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) mean += weights[i] * parts[i].at(l).first;
    mean /= total;
    // Law of total variance: within-part variance plus spread of the means.
    double var = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double inv = parts[i][l].second, d = parts[i][l].first - mean;
      var += weights[i] * (1.0 / (inv * inv) + d * d);
    }
    out[l] = {mean, 1.0 / std::sqrt(var / total)};
  }
  return out;
}

std::size_t estimate_inference_bytes(const ModelConfig& config, int height, int width) {
  const int d = config.divisor();
  const double pixels = double(round_up(height, d)) * round_up(width, d);
  // Fitted to peak RSS of whole-image runs (base 4/8/16, 0.5 to 8.3
  // megapixels) with some headroom: about 4 bytes per channel-pixel for each
  // encoder branch plus twelve decoder maps, 64 bytes per pixel of image
  // buffers, and a fixed 64 MB.
  const int branches = 1 + (config.use_gem ? 1 : 0) + (config.use_cem ? 1 : 0);
  const double per_pixel = double(config.base_channels) * sizeof(float) * (branches + 12) + 64.0;
  return static_cast<std::size_t>(pixels * per_pixel) + (std::size_t(64) << 20);
}

std::size_t memory_budget_bytes() {
  std::size_t mb = 3072;
  if (const char* env = std::getenv("DDNET_MEMORY_BUDGET_MB")) {
    try {
      mb = std::stoull(env);
    } catch (const std::exception&) {
      fail(ErrorKind::argument, "DDNET_MEMORY_BUDGET_MB must be an integer number of megabytes");
    }
  }
  return mb << 20;
}

void check_memory_budget(const ModelConfig& config, int height, int width) {
  const std::size_t need = estimate_inference_bytes(config, height, width);
  const std::size_t budget = memory_budget_bytes();
  if (need > budget)
    fail(ErrorKind::resource, std::to_string(width) + "x" + std::to_string(height) + " needs about " +
                                  std::to_string(need >> 20) + " MB for whole-image inference (budget " +
                                  std::to_string(budget >> 20) + " MB); rerun with --tile 512");
}

}  // namespace ddnet
