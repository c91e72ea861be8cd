// SPDX-License-Identifier: Apache-2.0
#include "ddnet/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>

#include "ddnet/log_ops.hpp"

namespace ddnet {
namespace fs = std::filesystem;

float draw_coefficient(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.1, 0.9);
  return std::clamp(static_cast<float>(dist(rng)), 0.1f, 0.9f);
}

Synthesized synthesize_lowlight(const Image& clear, std::uint64_t seed) {
  const float m = draw_coefficient(seed);
  FeatureMap low = clear.planes();
  low.matrix() *= m;
  return {Image(std::move(low)), m};
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

DatasetManifest scan_dataset(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) fail(ErrorKind::io, "dataset root does not exist: " + root.string());
  DatasetManifest manifest;
  manifest.root = root;
  manifest.split = split;

  std::map<std::string, fs::path> low, high;
  if (fs::is_directory(root / "low"))
    for (const auto& p : list_images(root / "low")) low[p.filename().string()] = p;
  if (fs::is_directory(root / "high"))
    for (const auto& p : list_images(root / "high")) high[p.filename().string()] = p;

  for (const auto& [name, path] : low) {
    auto it = high.find(name);
    if (it == high.end()) {
      manifest.warnings.push_back("no high/" + name + " for low/" + name);
      continue;
    }
    manifest.pairs.push_back({path, it->second, fs::path(name).stem().string()});
  }
  for (const auto& [name, path] : high)
    if (!low.count(name)) manifest.warnings.push_back("no low/" + name + " for high/" + name);

  if (manifest.pairs.empty()) fail(ErrorKind::dataset, "no matched low/high pairs under " + root.string());
  std::sort(manifest.pairs.begin(), manifest.pairs.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < manifest.pairs.size(); ++i)
    if (manifest.pairs[i].id == manifest.pairs[i - 1].id)
      fail(ErrorKind::dataset, "duplicate sample id '" + manifest.pairs[i].id + "' under " + root.string());
  return manifest;
}

PairedSample make_pair(Image low, Image normal, std::string id) {
  if (!low.planes().same_shape(normal.planes()))
    fail(ErrorKind::dataset, "sample '" + id + "': low " + low.planes().shape_string() + " and high " +
                                 normal.planes().shape_string() + " differ");
  if (low.channels() != 3) fail(ErrorKind::dataset, "sample '" + id + "': RGB images required");
  PairedSample s;
  s.grad_in = extract_gradient(low);
  s.grad_gt = extract_gradient(normal);
  s.low = std::move(low);
  s.normal = std::move(normal);
  s.id = std::move(id);
  return s;
}

PairedSample load_pair(const ManifestEntry& entry) {
  return make_pair(load_image(entry.low), load_image(entry.normal), entry.id);
}

PairedSample sample_patch(const PairedSample& sample, int patch, std::uint64_t seed, int divisor) {
  const int h = sample.low.height(), w = sample.low.width();
  require(patch >= 1 && patch <= std::min(h, w),
          "patch size " + std::to_string(patch) + " exceeds sample '" + sample.id + "' (" + std::to_string(h) + "x" +
              std::to_string(w) + ")");
  require(patch % divisor == 0, "patch size must be a multiple of " + std::to_string(divisor));
  std::mt19937_64 rng(seed);
  const int top = std::uniform_int_distribution<int>(0, h - patch)(rng);
  const int left = std::uniform_int_distribution<int>(0, w - patch)(rng);
  PairedSample out;
  out.low = Image(crop(sample.low.planes(), top, left, patch, patch));
  out.normal = Image(crop(sample.normal.planes(), top, left, patch, patch));
  out.grad_in = GradientMap(crop(sample.grad_in.planes(), top, left, patch, patch));
  out.grad_gt = GradientMap(crop(sample.grad_gt.planes(), top, left, patch, patch));
  out.id = sample.id;
  return out;
}

PairedSample flip_horizontal(const PairedSample& sample) {
  return {Image(flip_horizontal(sample.low.planes())), Image(flip_horizontal(sample.normal.planes())),
          GradientMap(flip_horizontal(sample.grad_in.planes())), GradientMap(flip_horizontal(sample.grad_gt.planes())),
          sample.id};
}

std::size_t synthesize_dataset(const fs::path& clear_dir, const fs::path& out, std::uint64_t seed) {
  const auto files = list_images(clear_dir);
  if (files.empty()) fail(ErrorKind::dataset, "no images in " + clear_dir.string());
  fs::create_directories(out / "low");
  fs::create_directories(out / "high");
  std::ofstream csv(out / "coefficients.csv");
  if (!csv) fail(ErrorKind::io, "cannot write " + (out / "coefficients.csv").string());
  csv << "id,m\n";
  csv.precision(9);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Image clear = load_image(files[i]);
    if (clear.channels() != 3) fail(ErrorKind::dataset, files[i].string() + ": RGB image required");
    const auto synth = synthesize_lowlight(clear, mix_seed(seed, i));
    const std::string id = files[i].stem().string();
    save_image(clear, out / "high" / (id + ".png"));
    save_image(synth.low, out / "low" / (id + ".png"));
    csv << id << ',' << synth.coefficient << '\n';
  }
  return files.size();
}

}  // namespace ddnet
