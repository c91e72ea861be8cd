// SPDX-License-Identifier: Apache-2.0
#include "ddnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "ddnet/losses.hpp"

namespace ddnet {

double psnr(const Image& a, const Image& b) {
  require(a.planes().same_shape(b.planes()), "psnr: shape mismatch (" + a.planes().shape_string() + " vs " +
                                                  b.planes().shape_string() + ")");
  const double mse = (a.planes().matrix().cast<double>() - b.planes().matrix().cast<double>()).squaredNorm() /
                     static_cast<double>(a.planes().size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require(a.planes().same_shape(b.planes()), "ssim: shape mismatch");
  double sum = 0;
  for (int c = 0; c < a.channels(); ++c) sum += ssim_channel(a.planes().plane(c), b.planes().plane(c));
  return sum / a.channels();
}

MetricReport aggregate(std::vector<MetricRow> rows) {
  require(!rows.empty(), "aggregate: no rows");
  std::sort(rows.begin(), rows.end(), [](const MetricRow& x, const MetricRow& y) { return x.id < y.id; });
  const double n = static_cast<double>(rows.size());
  MetricReport r;
  for (const auto& row : rows) {
    r.psnr_mean += row.psnr;
    r.ssim_mean += row.ssim;
  }
  r.psnr_mean /= n;
  r.ssim_mean /= n;
  for (const auto& row : rows) {
    r.psnr_std += (row.psnr - r.psnr_mean) * (row.psnr - r.psnr_mean);
    r.ssim_std += (row.ssim - r.ssim_mean) * (row.ssim - r.ssim_mean);
  }
  r.psnr_std = std::sqrt(r.psnr_std / n);
  r.ssim_std = std::sqrt(r.ssim_std / n);
  r.per_image = std::move(rows);
  return r;
}

std::string format_mean_std(double mean, double std, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f±%.*f", precision, mean, precision, std);
  return buf;
}

void write_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "id,psnr,ssim\n";
  out.precision(10);
  for (const auto& row : report.per_image) out << row.id << ',' << row.psnr << ',' << row.ssim << '\n';
}

void write_json(const MetricReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["count"] = report.per_image.size();
  j["psnr"] = {{"mean", report.psnr_mean}, {"std", report.psnr_std}};
  j["ssim"] = {{"mean", report.ssim_mean}, {"std", report.ssim_std}};
  j["summary"] = {{"psnr", format_mean_std(report.psnr_mean, report.psnr_std, 2)},
                  {"ssim", format_mean_std(report.ssim_mean, report.ssim_std, 3)}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ddnet
