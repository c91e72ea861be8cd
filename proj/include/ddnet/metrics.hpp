// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ddnet/image.hpp"

namespace ddnet {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all pixels and channels, peak 1.0.
double psnr(const Image& a, const Image& b);
/// Mean over channels of ssim_channel(); both sides need at least 11x11.
double ssim(const Image& a, const Image& b);

struct MetricRow {
  std::string id;
  double psnr = 0;
  double ssim = 0;
};

struct MetricReport {
  std::vector<MetricRow> per_image;  // sorted by id
  double psnr_mean = 0;
  double psnr_std = 0;
  double ssim_mean = 0;
  double ssim_std = 0;
};

/// Mean and population standard deviation; rows are sorted by id.
MetricReport aggregate(std::vector<MetricRow> rows);

/// "21.86±4.36"-style cell.
std::string format_mean_std(double mean, double std, int precision);

void write_csv(const MetricReport& report, const std::filesystem::path& path);
void write_json(const MetricReport& report, const std::filesystem::path& path);

}  // namespace ddnet
