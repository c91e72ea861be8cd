// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ddnet/autograd.hpp"
#include "ddnet/image.hpp"

namespace ddnet {

/// Architecture hyperparameters.
struct ModelConfig {
  int base_channels = 16;
  int num_scales = 3;
  bool use_sam = true;
  bool use_scm = true;
  bool use_gem = true;
  bool use_cem = true;
  float prelu_init = 0.25f;

  /// ScCAM blocks per path: one encoder-side and one decoder-side per scale.
  int blocks_per_path() const { return 2 * num_scales; }
  /// Input height and width must be multiples of this.
  int divisor() const { return 1 << (num_scales - 1); }
  int channels_at(int scale) const { return base_channels << scale; }

  void validate() const {
    require(base_channels >= 1, "base_channels must be >= 1");
    require(num_scales >= 1 && num_scales <= 8, "num_scales must be in [1, 8]");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NormSpec {
  int gamma = -1;
  int beta = -1;
};

/// 3x3 conv -> layer norm -> PReLU. The norm is absent when SCM is ablated.
struct ScmSpec {
  ConvSpec conv;
  std::optional<NormSpec> norm;
  int slope = -1;
};

/// 7x7 conv over the (avg, max) channel pool.
struct SamSpec {
  ConvSpec conv;
};

/// Self-calibrated convolution block with spatial attention. Both branches
/// run at half the block width; a 1x1 conv fuses them back to full width
/// before the residual add.
struct ScCamSpec {
  int channels = 0;
  ConvSpec upper_in;
  ConvSpec upper_conv;
  std::optional<SamSpec> sam;
  ScmSpec upper_scm;
  ConvSpec lower_in;
  ScmSpec lower_scm1;
  ScmSpec lower_scm2;
  ConvSpec fuse;
};

/// Multi-scale encoder: one ScCAM per scale, stride-2 conv between scales.
struct EncoderSpec {
  std::vector<ConvSpec> down;  // down[s - 1] enters scale s
  std::vector<ScCamSpec> blocks;
};

/// GEM / CEM: encoder, mirrored decoder with skip merges, and a 3x3 head.
struct BranchSpec {
  EncoderSpec encoder;
  std::vector<ConvSpec> up;     // up[s] leaves scale s + 1 into scale s
  std::vector<ConvSpec> merge;  // merge[s] fuses (upsampled, skip) at scale s
  std::vector<ScCamSpec> blocks;
  ConvSpec head;
};

/// Final decoder that fuses peripheral-encoder skips with GEM/CEM features.
struct FusionSpec {
  std::vector<ConvSpec> up;
  std::vector<ConvSpec> fuse;
  std::vector<ScCamSpec> blocks;
  ConvSpec head;
};

struct Architecture {
  ConvSpec stem;
  EncoderSpec peripheral;
  std::optional<BranchSpec> gem;
  std::optional<BranchSpec> cem;
  FusionSpec fusion;
};

/// Network parameters plus the layer wiring that indexes them.
template <typename Scalar>
class BasicModel {
 public:
  BasicModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const Architecture& architecture() const { return arch_; }
  ParameterStore<Scalar>& parameters() { return params_; }
  const ParameterStore<Scalar>& parameters() const { return params_; }

  /// Redraws every parameter from its init record using `seed`.
  void initialize(std::uint64_t seed);
  /// Sets every parameter (including norm scales and PReLU slopes) to zero.
  void zero();

  template <typename Other>
  BasicModel<Other> cast() const {
    BasicModel<Other> out(config_, seed_);
    for (int i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<Other>();
    return out;
  }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterStore<Scalar> params_;
  Architecture arch_;
};

using Model = BasicModel<float>;

/// Graph-level outputs of one forward pass; optional heads are null when the
/// corresponding branch is ablated.
template <typename Scalar>
struct GraphOutputs {
  typename Graph<Scalar>::Var final;
  typename Graph<Scalar>::Var coarse;
  typename Graph<Scalar>::Var grad_pred;
};

/// Records the network on `graph`. `input` is the 4-channel (RGB, LoG) stack.
template <typename Scalar>
GraphOutputs<Scalar> forward_graph(Graph<Scalar>& graph, const BasicModel<Scalar>& model,
                                   const typename Graph<Scalar>::Var& low, const typename Graph<Scalar>::Var& grad);

template <typename Scalar>
typename Graph<Scalar>::Var sccam_forward(Graph<Scalar>& graph, const ScCamSpec& block,
                                          const typename Graph<Scalar>::Var& x);
template <typename Scalar>
typename Graph<Scalar>::Var sam_forward(Graph<Scalar>& graph, const SamSpec& sam,
                                        const typename Graph<Scalar>::Var& features);
template <typename Scalar>
typename Graph<Scalar>::Var scm_forward(Graph<Scalar>& graph, const ScmSpec& scm, const typename Graph<Scalar>::Var& w);

struct ForwardOutput {
  Image final;
  std::optional<Image> coarse;
  std::optional<GradientMap> grad_pred;
};

/// Optional layer-norm statistics hooks for forward().
struct NormHooks {
  NormStatistics* capture = nullptr;
  const NormStatistics* replay = nullptr;
};

/// Inference. Height and width must be multiples of config().divisor().
ForwardOutput forward(const Model& model, const Image& low, const GradientMap& grad, const NormHooks& hooks = {});

Model build_model(const ModelConfig& config, std::uint64_t seed);

template <typename Scalar>
Eigen::Index count_params(const BasicModel<Scalar>& model) {
  return model.parameters().scalar_count();
}

/// Validates the shape contract of forward().
void check_forward_input(const ModelConfig& config, const FeatureMap& low, const FeatureMap& grad);

extern template class BasicModel<float>;
extern template class BasicModel<double>;

}  // namespace ddnet
