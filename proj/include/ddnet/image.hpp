// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>

#include "ddnet/planes.hpp"

namespace ddnet {

/// Normalized intensity image: 1 or 3 channels, every element in [0, 1].
class Image {
 public:
  Image() = default;
  /// Validates the range and channel invariants.
  explicit Image(FeatureMap planes);

  static Image constant(int channels, int height, int width, float value);
  /// Clamps each element to [0, 1] instead of rejecting out-of-range input.
  static Image clamped(FeatureMap planes);

  int channels() const { return planes_.channels(); }
  int height() const { return planes_.height(); }
  int width() const { return planes_.width(); }
  const FeatureMap& planes() const { return planes_; }
  float operator()(int c, int y, int x) const { return planes_(c, y, x); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  FeatureMap planes_;
};

/// Signed single-channel LoG response.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(FeatureMap planes);

  int height() const { return planes_.height(); }
  int width() const { return planes_.width(); }
  const FeatureMap& planes() const { return planes_; }
  float operator()(int y, int x) const { return planes_(0, y, x); }

  friend bool operator==(const GradientMap&, const GradientMap&) = default;

 private:
  FeatureMap planes_;
};

Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit PNG; elements are quantized as round(clamp(x, 0, 1) * 255).
void save_image(const FeatureMap& planes, const std::filesystem::path& path);
inline void save_image(const Image& img, const std::filesystem::path& path) { save_image(img.planes(), path); }

/// Rec. 601 luma. 1-channel input is returned unchanged.
Image to_luma(const Image& img);

inline std::uint8_t quantize(float x) {
  const float c = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace ddnet
