// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ddnet/model.hpp"

namespace ddnet {

/// Adam first/second moments, one matrix per parameter.
struct AdamState {
  std::vector<RowMatrix<float>> first;
  std::vector<RowMatrix<float>> second;

  static AdamState zeros_like(const ParameterStore<float>& params) {
    return {params.zeros_like(), params.zeros_like()};
  }
  bool all_finite() const {
    for (const auto& m : first)
      if (!m.allFinite()) return false;
    for (const auto& m : second)
      if (!m.allFinite()) return false;
    return true;
  }
};

struct Checkpoint {
  Model model;
  std::int64_t step = 0;
  int epoch = 0;  // completed epochs
  std::optional<AdamState> adam;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic "DDNETCKP", u32 version, u64 header length, JSON
/// header (config, seed, counters, parameter table), then little-endian
/// float32 parameter data followed by the Adam moments when present.
void save_checkpoint(const std::filesystem::path& path, const Model& model, std::int64_t step = 0, int epoch = 0,
                     const AdamState* adam = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ddnet
