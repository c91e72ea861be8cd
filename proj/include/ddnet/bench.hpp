// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddnet/model.hpp"

namespace ddnet {

struct Resolution {
  int width = 0;
  int height = 0;

  std::string label() const { return std::to_string(width) + "x" + std::to_string(height); }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// Parses "WxH" (e.g. "1920x1080").
Resolution parse_resolution(const std::string& text);

std::vector<Resolution> default_resolutions();

/// Published per-image GPU times for the default resolutions, shown next to
/// local measurements for reference only.
std::optional<double> reference_seconds(const Resolution& r);

struct BenchOptions {
  std::vector<Resolution> resolutions = default_resolutions();
  int warmup = 1;
  int repeats = 3;
  int tile = 0;  // 0: whole image
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  Resolution resolution;
  double mean_seconds = 0;
  double std_seconds = 0;
  double fps = 0;
  int repeats = 0;
  int warmup = 0;
  bool tiled = false;
};

/// Times gradient extraction plus the forward pass on a fixed random image
/// per resolution.
std::vector<BenchRow> run_bench(const Model& model, const BenchOptions& options);

void print_bench_table(std::ostream& out, const std::vector<BenchRow>& rows);
void write_bench_json(const std::filesystem::path& path, const Model& model, const std::vector<BenchRow>& rows,
                      const std::string& checkpoint_id);

}  // namespace ddnet
