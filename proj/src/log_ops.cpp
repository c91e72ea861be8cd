// SPDX-License-Identifier: Apache-2.0
#include "ddnet/log_ops.hpp"

namespace ddnet {

GradientMap extract_gradient(const Image& img) {
  // Accumulated in double and rounded once.
  static const Kernel<double> kernel = log_kernel<double>();
  return GradientMap(convolve2d(to_luma(img).planes().cast<double>(), kernel).cast<float>());
}

FeatureMap gradient_display(const GradientMap& grad) {
  FeatureMap out = grad.planes();
  out.matrix() = ((out.matrix().array() + 16.0f) / 32.0f).matrix();
  return out;
}

}  // namespace ddnet
