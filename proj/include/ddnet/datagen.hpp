// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddnet/sample.hpp"

namespace ddnet {

/// SplitMix64 finalizer; derives independent per-item seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Synthesized {
  Image low;
  float coefficient = 0;  // in [0.1, 0.9]
};

/// Darkens every pixel by one coefficient drawn uniformly from [0.1, 0.9].
Synthesized synthesize_lowlight(const Image& clear, std::uint64_t seed);
/// The coefficient synthesize_lowlight() draws for `seed`.
float draw_coefficient(std::uint64_t seed);

enum class Split { train, test };

struct ManifestEntry {
  std::filesystem::path low;
  std::filesystem::path normal;
  std::string id;
};

/// Pairs found under `<root>/low` and `<root>/high`, matched by file name.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> pairs;  // sorted by id
  Split split = Split::train;
  std::vector<std::string> warnings;  // unmatched files
};

DatasetManifest scan_dataset(const std::filesystem::path& root, Split split = Split::train);

/// Builds a sample from two images, computing both gradient maps.
PairedSample make_pair(Image low, Image normal, std::string id);
PairedSample load_pair(const ManifestEntry& entry);

/// Cuts the same random patch x patch window from all four arrays. `divisor`
/// is the model's spatial multiple.
PairedSample sample_patch(const PairedSample& sample, int patch, std::uint64_t seed, int divisor = 1);
/// Mirrors all four arrays left-right.
PairedSample flip_horizontal(const PairedSample& sample);

/// Writes `<out>/low`, `<out>/high` and `coefficients.csv` for every image in
/// `clear_dir`. Returns the number of pairs written.
std::size_t synthesize_dataset(const std::filesystem::path& clear_dir, const std::filesystem::path& out,
                               std::uint64_t seed);

/// Image files (.png/.jpg/.jpeg) directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace ddnet
