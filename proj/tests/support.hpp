// SPDX-License-Identifier: Apache-2.0
// Shared fixtures and independent reference implementations for the tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ddnet/image.hpp"
#include "ddnet/model.hpp"

namespace testing {

using ddnet::FeatureMap;
using ddnet::Image;
using ddnet::RowMatrix;

/// Uniform random planes in [lo, hi).
FeatureMap random_planes(int channels, int height, int width, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f);
Image random_image(int channels, int height, int width, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f);
ddnet::Planes<double> random_planes_d(int channels, int height, int width, std::uint64_t seed, double lo = 0.0,
                                      double hi = 1.0);

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Writes a paired dataset (low/, high/) of `count` random images.
void write_pair_dataset(const std::filesystem::path& root, int count, int height, int width, std::uint64_t seed);

namespace oracle {

/// SSIM evaluated window by window straight from the definition: for every
/// fully contained 11x11 window, weighted means, variances and covariance
/// are accumulated directly, then the per-window index is averaged.
double ssim_direct(const RowMatrix<double>& a, const RowMatrix<double>& b);

/// Correlation with replicate padding, one tap at a time.
RowMatrix<double> correlate_replicate(const RowMatrix<double>& x, const RowMatrix<double>& taps);

/// Parameter count enumerated from the layer list of the architecture.
long long param_count(const ddnet::ModelConfig& config);

}  // namespace oracle

/// Small configuration that keeps network-level tests fast.
ddnet::ModelConfig tiny_config(int base = 4, int scales = 2);

/// Max |a - b| over all elements.
double max_abs_diff(const FeatureMap& a, const FeatureMap& b);

/// Runs a shell command and returns its exit status.
int run_command(const std::string& command);

}  // namespace testing
