// SPDX-License-Identifier: Apache-2.0
#include "ddnet/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <regex>

#include "ddnet/inference.hpp"
#include "json.hpp"

namespace ddnet {

Resolution parse_resolution(const std::string& text) {
  static const std::regex pattern(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) fail(ErrorKind::argument, "bad resolution '" + text + "' (expected WxH)");
  Resolution r;
  try {
    r = {std::stoi(m[1]), std::stoi(m[2])};
  } catch (const std::exception&) {
    fail(ErrorKind::argument, "resolution out of range: " + text);
  }
  require(r.width > 0 && r.height > 0, "resolution must be positive: " + text);
  return r;
}

std::vector<Resolution> default_resolutions() { return {{800, 600}, {1080, 720}, {2560, 1440}, {3840, 2160}}; }

std::optional<double> reference_seconds(const Resolution& r) {
  if (r == Resolution{800, 600}) return 0.021;
  if (r == Resolution{1080, 720}) return 0.021;
  if (r == Resolution{2560, 1440}) return 0.023;
  if (r == Resolution{3840, 2160}) return 0.027;
  return std::nullopt;
}

void BenchOptions::validate() const {
  require(!resolutions.empty(), "bench: no resolutions");
  require(warmup >= 1, "bench: warmup must be >= 1");
  require(repeats >= 3, "bench: repeats must be >= 3");
  require(tile == 0 || tile > 2 * kTileOverlap, "bench: tile must exceed " + std::to_string(2 * kTileOverlap));
}

std::vector<BenchRow> run_bench(const Model& model, const BenchOptions& options) {
  options.validate();
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  for (const auto& r : options.resolutions) {
    if (options.tile == 0) check_memory_budget(model.config(), r.height, r.width);
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<float> u(0.0f, 0.3f);
    FeatureMap pixels(3, r.height, r.width);
    for (Eigen::Index i = 0; i < pixels.size(); ++i) pixels.data()[i] = u(rng);
    const Image low(std::move(pixels));

    auto run = [&] { return options.tile ? enhance_tiled(model, low, options.tile) : enhance_image(model, low); };
    for (int i = 0; i < options.warmup; ++i) run();
    std::vector<double> times;
    for (int i = 0; i < options.repeats; ++i) {
      const auto t0 = clock::now();
      const Image out = run();
      times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    double mean = 0;
    for (double t : times) mean += t;
    mean /= times.size();
    double var = 0;
    for (double t : times) var += (t - mean) * (t - mean);
    const double sd = std::sqrt(var / times.size());
    rows.push_back({r, mean, sd, 1.0 / mean, options.repeats, options.warmup, options.tile != 0});
  }
  return rows;
}

void print_bench_table(std::ostream& out, const std::vector<BenchRow>& rows) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %12s %10s %9s %14s\n", "resolution", "mean_s", "std_s", "fps", "reference_s");
  out << line;
  for (const auto& row : rows) {
    const auto ref = reference_seconds(row.resolution);
    char ref_text[32] = "-";
    if (ref) std::snprintf(ref_text, sizeof ref_text, "%.3f", *ref);
    std::snprintf(line, sizeof line, "%-12s %12.4f %10.4f %9.3f %14s%s\n", row.resolution.label().c_str(),
                  row.mean_seconds, row.std_seconds, row.fps, ref_text, row.tiled ? "  (tiled)" : "");
    out << line;
  }
  out << "reference_s: published GPU timings (800x600 0.021, 1080x720 0.021, 2560x1440 0.023, 3840x2160 0.027); "
         "not comparable to this CPU build\n";
}

void write_bench_json(const std::filesystem::path& path, const Model& model, const std::vector<BenchRow>& rows,
                      const std::string& checkpoint_id) {
  nlohmann::json j;
  j["device"] = "cpu";
  j["checkpoint"] = checkpoint_id;
  j["base_channels"] = model.config().base_channels;
  j["num_scales"] = model.config().num_scales;
  j["parameters"] = count_params(model);
  auto& list = j["results"] = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json entry = {{"resolution", row.resolution.label()},
                            {"width", row.resolution.width},
                            {"height", row.resolution.height},
                            {"mean_seconds", row.mean_seconds},
                            {"std_seconds", row.std_seconds},
                            {"fps", row.fps},
                            {"repeats", row.repeats},
                            {"warmup", row.warmup},
                            {"tiled", row.tiled}};
    if (const auto ref = reference_seconds(row.resolution)) entry["reference_seconds"] = *ref;
    list.push_back(std::move(entry));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ddnet
