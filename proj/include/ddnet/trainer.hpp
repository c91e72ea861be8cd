// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ddnet/checkpoint.hpp"
#include "ddnet/datagen.hpp"
#include "ddnet/losses.hpp"
#include "ddnet/metrics.hpp"

namespace ddnet {

struct TrainConfig {
  int epochs = 100;
  double lr0 = 1e-3;
  double decay_factor = 0.1;
  int decay_every = 20;
  int batch = 8;
  int patch = 96;
  LossWeights weights;
  FinalLossForm final_form = FinalLossForm::mean;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool flip = true;
  std::filesystem::path train_root;  // LOL layout (low/, high/)
  std::filesystem::path synth_root;  // optional second source, same layout
  std::filesystem::path out_dir = "runs/ddnet";
  std::filesystem::path resume;      // checkpoint to continue from
  ModelConfig model;

  void validate() const;

  /// Sets one field from its flat key (as used in config files and --set).
  void set(const std::string& key, const std::string& value);
  /// Reads `key = value` lines; '#' starts a comment.
  static TrainConfig from_file(const std::filesystem::path& path);
  /// All keys with their current values, in file order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

/// lr0 * decay_factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const TrainConfig& cfg);

struct TrainState {
  Model model;
  AdamState adam;
  int epoch = 0;          // epochs completed
  std::int64_t step = 0;  // optimizer steps taken

  explicit TrainState(Model m) : model(std::move(m)), adam(AdamState::zeros_like(model.parameters())) {}
};

TrainState make_state(const TrainConfig& cfg);

/// Loss weights actually used: terms whose head is ablated are zeroed.
LossWeights effective_weights(const TrainConfig& cfg);

/// One Adam update on the batch mean of the joint loss. `lr` defaults to
/// lr_schedule(state.epoch).
LossBreakdown train_step(TrainState& state, std::span<const PairedSample> batch, const TrainConfig& cfg);
LossBreakdown train_step(TrainState& state, std::span<const PairedSample> batch, const TrainConfig& cfg, double lr);

/// Backpropagates the batch-mean joint loss without updating; returns the
/// loss and fills `grads` (one matrix per parameter).
LossBreakdown compute_gradients(const Model& model, std::span<const PairedSample> batch, const LossWeights& weights,
                                FinalLossForm form, std::vector<RowMatrix<float>>& grads);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  LossBreakdown loss;
};

/// Full training run. Writes `train_log.csv`, periodic `epoch_NNN.ckpt` and
/// `final.ckpt` under out_dir; returns the final checkpoint path.
std::filesystem::path train(const TrainConfig& cfg, const std::function<void(const StepRecord&)>& on_step = {});

/// Sample order for one epoch: entries of the primary source plus (when
/// configured) an equal number drawn from the synthetic source, shuffled.
std::vector<ManifestEntry> epoch_order(const DatasetManifest* real, const DatasetManifest* synth, std::uint64_t seed,
                                       int epoch);

/// Full-resolution PSNR/SSIM over every pair of the manifest.
MetricReport evaluate(const Model& model, const DatasetManifest& manifest);

}  // namespace ddnet
