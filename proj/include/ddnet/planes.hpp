// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <string>

#include "ddnet/error.hpp"

namespace ddnet {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Planar multi-channel 2-D array. Storage is a channels x (height*width)
/// row-major matrix, so each channel is one contiguous row and a 1x1
/// convolution is a plain matrix product.
template <typename Scalar>
class Planes {
 public:
  using Matrix = RowMatrix<Scalar>;

  Planes() = default;
  Planes(int channels, int height, int width)
      : height_(height), width_(width), data_(Matrix::Zero(channels, Eigen::Index(height) * width)) {}
  Planes(int height, int width, Matrix data) : height_(height), width_(width), data_(std::move(data)) {
    assert(data_.cols() == Eigen::Index(height) * width);
  }

  static Planes constant(int channels, int height, int width, Scalar value) {
    Planes p(channels, height, width);
    p.data_.setConstant(value);
    return p;
  }

  int channels() const { return static_cast<int>(data_.rows()); }
  int height() const { return height_; }
  int width() const { return width_; }
  Eigen::Index pixels() const { return data_.cols(); }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Matrix& matrix() { return data_; }
  const Matrix& matrix() const { return data_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(int c, int y, int x) { return data_(c, Eigen::Index(y) * width_ + x); }
  Scalar operator()(int c, int y, int x) const { return data_(c, Eigen::Index(y) * width_ + x); }

  auto channel(int c) { return data_.row(c); }
  auto channel(int c) const { return data_.row(c); }

  /// View of one channel as an H x W row-major map.
  Eigen::Map<Matrix> plane(int c) { return {data_.data() + c * data_.cols(), height_, width_}; }
  Eigen::Map<const Matrix> plane(int c) const { return {data_.data() + c * data_.cols(), height_, width_}; }

  bool same_shape(const Planes& other) const {
    return channels() == other.channels() && height_ == other.height_ && width_ == other.width_;
  }
  bool same_extent(const Planes& other) const { return height_ == other.height_ && width_ == other.width_; }

  std::string shape_string() const {
    return std::to_string(channels()) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  template <typename Other>
  Planes<Other> cast() const {
    return Planes<Other>(height_, width_, data_.template cast<Other>());
  }

  friend bool operator==(const Planes& a, const Planes& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  Matrix data_;
};

using FeatureMap = Planes<float>;

template <typename Scalar>
Planes<Scalar> crop(const Planes<Scalar>& src, int top, int left, int height, int width) {
  require(top >= 0 && left >= 0 && top + height <= src.height() && left + width <= src.width() && height > 0 &&
              width > 0,
          "crop window out of range");
  Planes<Scalar> out(src.channels(), height, width);
  for (int c = 0; c < src.channels(); ++c)
    out.plane(c) = src.plane(c).block(top, left, height, width);
  return out;
}

template <typename Scalar>
Planes<Scalar> flip_horizontal(const Planes<Scalar>& src) {
  Planes<Scalar> out(src.channels(), src.height(), src.width());
  for (int c = 0; c < src.channels(); ++c) out.plane(c) = src.plane(c).rowwise().reverse();
  return out;
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Mirror padding (edge sample not repeated).
template <typename Scalar>
Planes<Scalar> pad_reflect(const Planes<Scalar>& src, int top, int bottom, int left, int right) {
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_reflect: negative padding");
  const int h = src.height() + top + bottom, w = src.width() + left + right;
  Planes<Scalar> out(src.channels(), h, w);
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < h; ++y) {
      const int sy = reflect_index(y - top, src.height());
      for (int x = 0; x < w; ++x) out(c, y, x) = src(c, sy, reflect_index(x - left, src.width()));
    }
  return out;
}

}  // namespace ddnet
