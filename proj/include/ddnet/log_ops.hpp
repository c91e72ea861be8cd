// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddnet/image.hpp"

namespace ddnet {

/// Square correlation kernel with odd side length.
template <typename Scalar>
struct Kernel {
  RowMatrix<Scalar> taps;

  int size() const { return static_cast<int>(taps.rows()); }
  int radius() const { return size() / 2; }
  Scalar sum() const { return taps.sum(); }
};

/// 4-neighbour discrete Laplacian.
template <typename Scalar = float>
Kernel<Scalar> laplacian_kernel() {
  Kernel<Scalar> k{RowMatrix<Scalar>(3, 3)};
  k.taps << 0, 1, 0,
            1, -4, 1,
            0, 1, 0;
  return k;
}

/// The fixed 5x5 integer LoG kernel used for gradient extraction.
template <typename Scalar = float>
Kernel<Scalar> log_kernel() {
  Kernel<Scalar> k{RowMatrix<Scalar>(5, 5)};
  k.taps << 0, 0, 1, 0, 0,
            0, 1, 2, 1, 0,
            1, 2, -16, 2, 1,
            0, 1, 2, 1, 0,
            0, 0, 1, 0, 0;
  return k;
}

namespace detail {

template <typename Scalar, typename F>
Kernel<Scalar> radial_kernel(double sigma, int size, F&& f) {
  require(sigma > 0.0, "kernel sigma must be positive");
  require(size > 0 && size % 2 == 1, "kernel size must be a positive odd integer");
  const int r = size / 2;
  Kernel<Scalar> k{RowMatrix<Scalar>(size, size)};
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double u = i - r, v = j - r;
      k.taps(i, j) = static_cast<Scalar>(f(u * u + v * v));
    }
  return k;
}

}  // namespace detail

/// Sampled Gaussian renormalized to unit sum.
template <typename Scalar = double>
Kernel<Scalar> gaussian_kernel(double sigma, int size) {
  auto k = detail::radial_kernel<Scalar>(sigma, size, [&](double r2) { return std::exp(-r2 / (2 * sigma * sigma)); });
  k.taps /= k.taps.sum();
  return k;
}

/// Sampled continuous LoG, mean-subtracted so the taps sum to zero.
/// Used to validate the fixed kernel, not in production.
template <typename Scalar = double>
Kernel<Scalar> log_kernel_analytic(double sigma, int size) {
  const double s2 = sigma * sigma;
  auto k = detail::radial_kernel<Scalar>(sigma, size, [&](double r2) {
    return -1.0 / (std::numbers::pi * s2 * s2) * (1.0 - r2 / (2 * s2)) * std::exp(-r2 / (2 * s2));
  });
  k.taps.array() -= k.taps.mean();
  return k;
}

/// Same-size correlation (no kernel flip) with replicate border padding.
/// Every channel is filtered independently.
template <typename Scalar>
Planes<Scalar> convolve2d(const Planes<Scalar>& map, const Kernel<Scalar>& kernel) {
  require(!map.empty(), "convolve2d: empty map");
  require(kernel.size() % 2 == 1, "convolve2d: kernel size must be odd");
  const int h = map.height(), w = map.width(), r = kernel.radius();
  Planes<Scalar> out(map.channels(), h, w);
  for (int c = 0; c < map.channels(); ++c) {
    const auto src = map.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        Scalar acc = 0;
        for (int i = -r; i <= r; ++i) {
          const int sy = std::clamp(y + i, 0, h - 1);
          for (int j = -r; j <= r; ++j) {
            const Scalar t = kernel.taps(i + r, j + r);
            if (t != Scalar(0)) acc += t * src(sy, std::clamp(x + j, 0, w - 1));
          }
        }
        dst(y, x) = acc;
      }
  }
  return out;
}

/// LoG response of the luma channel, in [-16, 16] for valid images.
GradientMap extract_gradient(const Image& img);

/// Affine display map (x + 16) / 32 for writing a gradient map as an image.
FeatureMap gradient_display(const GradientMap& grad);

}  // namespace ddnet
