// SPDX-License-Identifier: Apache-2.0
#include "ddnet/model.hpp"

#include <cmath>

namespace ddnet {
namespace {

template <typename Scalar>
class Builder {
 public:
  Builder(ParameterStore<Scalar>& store, const ModelConfig& config) : store_(store), config_(config) {}

  ConvSpec conv(const std::string& name, int cin, int cout, int k, int stride = 1) {
    ConvSpec spec;
    spec.cin = cin;
    spec.cout = cout;
    spec.k = k;
    spec.stride = stride;
    spec.weight = store_.add(name + ".weight", {cout, cin, k, k}, cout, Eigen::Index(cin) * k * k, Init::kaiming);
    spec.bias = store_.add(name + ".bias", {cout}, cout, 1, Init::zeros);
    return spec;
  }

  ScmSpec scm(const std::string& name, int channels) {
    ScmSpec spec;
    spec.conv = conv(name + ".conv", channels, channels, 3);
    if (config_.use_scm) {
      NormSpec norm;
      norm.gamma = store_.add(name + ".norm.gamma", {channels}, channels, 1, Init::ones);
      norm.beta = store_.add(name + ".norm.beta", {channels}, channels, 1, Init::zeros);
      spec.norm = norm;
    }
    spec.slope = store_.add(name + ".prelu.slope", {channels}, channels, 1, Init::constant);
    return spec;
  }

  ScCamSpec sccam(const std::string& name, int channels) {
    const int half = std::max(1, channels / 2);
    ScCamSpec b;
    b.channels = channels;
    b.upper_in = conv(name + ".upper_in", channels, half, 1);
    b.upper_conv = conv(name + ".upper_conv", half, half, 3);
    if (config_.use_sam) b.sam = SamSpec{conv(name + ".sam", 2, 1, 7)};
    b.upper_scm = scm(name + ".upper_scm", half);
    b.lower_in = conv(name + ".lower_in", channels, half, 1);
    b.lower_scm1 = scm(name + ".lower_scm1", half);
    b.lower_scm2 = scm(name + ".lower_scm2", half);
    b.fuse = conv(name + ".fuse", 2 * half, channels, 1);
    return b;
  }

  EncoderSpec encoder(const std::string& name) {
    EncoderSpec e;
    for (int s = 0; s < config_.num_scales; ++s) {
      if (s > 0)
        e.down.push_back(conv(name + ".down" + std::to_string(s), config_.channels_at(s - 1), config_.channels_at(s), 3, 2));
      e.blocks.push_back(sccam(name + ".enc" + std::to_string(s), config_.channels_at(s)));
    }
    return e;
  }

  BranchSpec branch(const std::string& name, int head_channels) {
    BranchSpec b;
    b.encoder = encoder(name);
    const int scales = config_.num_scales;
    b.up.resize(scales - 1);
    b.merge.resize(scales - 1);
    b.blocks.resize(scales);
    for (int s = scales - 1; s >= 0; --s) {
      const int c = config_.channels_at(s);
      if (s < scales - 1) {
        b.up[s] = conv(name + ".up" + std::to_string(s), config_.channels_at(s + 1), c, 3);
        b.merge[s] = conv(name + ".merge" + std::to_string(s), 2 * c, c, 1);
      }
      b.blocks[s] = sccam(name + ".dec" + std::to_string(s), c);
    }
    b.head = conv(name + ".head", config_.base_channels, head_channels, 3);
    return b;
  }

  FusionSpec fusion(const std::string& name) {
    FusionSpec f;
    const int scales = config_.num_scales;
    const int sources = 1 + (config_.use_gem ? 1 : 0) + (config_.use_cem ? 1 : 0);
    f.up.resize(scales - 1);
    f.fuse.resize(scales);
    f.blocks.resize(scales);
    for (int s = scales - 1; s >= 0; --s) {
      const int c = config_.channels_at(s);
      const bool has_running = s < scales - 1;
      if (has_running) f.up[s] = conv(name + ".up" + std::to_string(s), config_.channels_at(s + 1), c, 3);
      f.fuse[s] = conv(name + ".fuse" + std::to_string(s), (sources + (has_running ? 1 : 0)) * c, c, 1);
      f.blocks[s] = sccam(name + ".dec" + std::to_string(s), c);
    }
    f.head = conv(name + ".head", config_.base_channels, 3, 3);
    return f;
  }

 private:
  ParameterStore<Scalar>& store_;
  const ModelConfig& config_;
};

template <typename Scalar>
using Var = typename Graph<Scalar>::Var;

template <typename Scalar>
Var<Scalar> upsample_conv(Graph<Scalar>& g, const ConvSpec& conv, const Var<Scalar>& x) {
  return ops::conv2d(g, ops::upsample2x(g, x), conv);
}

/// Returns the per-scale outputs of the encoder.
template <typename Scalar>
std::vector<Var<Scalar>> encode(Graph<Scalar>& g, const EncoderSpec& e, Var<Scalar> x) {
  std::vector<Var<Scalar>> skips;
  for (std::size_t s = 0; s < e.blocks.size(); ++s) {
    if (s > 0) x = ops::conv2d(g, x, e.down[s - 1]);
    x = sccam_forward(g, e.blocks[s], x);
    skips.push_back(x);
  }
  return skips;
}

/// Runs a GEM/CEM branch; returns decoder features per scale (index 0 is
/// full resolution).
template <typename Scalar>
std::vector<Var<Scalar>> run_branch(Graph<Scalar>& g, const BranchSpec& b, const Var<Scalar>& x) {
  auto skips = encode(g, b.encoder, x);
  const int scales = static_cast<int>(skips.size());
  std::vector<Var<Scalar>> out(scales);
  Var<Scalar> y = sccam_forward(g, b.blocks[scales - 1], skips[scales - 1]);
  out[scales - 1] = y;
  for (int s = scales - 2; s >= 0; --s) {
    auto up = upsample_conv(g, b.up[s], y);
    y = ops::conv2d(g, ops::concat<Scalar>(g, {up, skips[s]}), b.merge[s]);
    y = sccam_forward(g, b.blocks[s], y);
    out[s] = y;
  }
  return out;
}

template <typename Scalar>
void draw_parameters(ParameterStore<Scalar>& params, const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Kaiming-normal gain for PReLU with the configured negative slope.
  const double a = config.prelu_init;
  const double gain2 = 2.0 / (1.0 + a * a);
  for (auto& p : params) {
    switch (p.init) {
      case Init::kaiming: {
        const double fan_in = static_cast<double>(p.value.cols());
        std::normal_distribution<double> dist(0.0, std::sqrt(gain2 / fan_in));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
        break;
      }
      case Init::zeros: p.value.setZero(); break;
      case Init::ones: p.value.setOnes(); break;
      case Init::constant: p.value.setConstant(static_cast<Scalar>(config.prelu_init)); break;
    }
  }
}

}  // namespace

template <typename Scalar>
BasicModel<Scalar>::BasicModel(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  Builder<Scalar> b(params_, config_);
  arch_.stem = b.conv("stem", 4, config_.base_channels, 3);
  arch_.peripheral = b.encoder("peripheral");
  if (config_.use_gem) arch_.gem = b.branch("gem", 1);
  if (config_.use_cem) arch_.cem = b.branch("cem", 3);
  arch_.fusion = b.fusion("fusion");
  draw_parameters(params_, config_, seed_);
}

template <typename Scalar>
void BasicModel<Scalar>::initialize(std::uint64_t seed) {
  seed_ = seed;
  draw_parameters(params_, config_, seed_);
}

template <typename Scalar>
void BasicModel<Scalar>::zero() {
  for (auto& p : params_) p.value.setZero();
}

template <typename Scalar>
Var<Scalar> sam_forward(Graph<Scalar>& g, const SamSpec& sam, const Var<Scalar>& features) {
  return ops::sigmoid(g, ops::conv2d(g, ops::channel_pool(g, features), sam.conv));
}

template <typename Scalar>
Var<Scalar> scm_forward(Graph<Scalar>& g, const ScmSpec& scm, const Var<Scalar>& w) {
  auto y = ops::conv2d(g, w, scm.conv);
  if (scm.norm) y = ops::layer_norm(g, y, scm.norm->gamma, scm.norm->beta);
  return ops::prelu(g, y, scm.slope);
}

template <typename Scalar>
Var<Scalar> sccam_forward(Graph<Scalar>& g, const ScCamSpec& b, const Var<Scalar>& x) {
  auto u = ops::conv2d(g, x, b.upper_in);
  auto upper = ops::conv2d(g, u, b.upper_conv);
  if (b.sam) upper = ops::gate(g, sam_forward(g, *b.sam, u), upper);
  upper = scm_forward(g, b.upper_scm, upper);

  auto lower = ops::conv2d(g, x, b.lower_in);
  lower = scm_forward(g, b.lower_scm1, lower);
  lower = scm_forward(g, b.lower_scm2, lower);

  auto fused = ops::conv2d(g, ops::concat<Scalar>(g, {upper, lower}), b.fuse);
  return ops::add(g, fused, x);
}

template <typename Scalar>
GraphOutputs<Scalar> forward_graph(Graph<Scalar>& g, const BasicModel<Scalar>& model, const Var<Scalar>& low,
                                   const Var<Scalar>& grad) {
  const auto& arch = model.architecture();
  const int scales = model.config().num_scales;
  auto stem = ops::conv2d(g, ops::concat<Scalar>(g, {low, grad}), arch.stem);

  auto peripheral = encode(g, arch.peripheral, stem);
  std::vector<Var<Scalar>> gem, cem;
  GraphOutputs<Scalar> out;
  if (arch.gem) {
    gem = run_branch(g, *arch.gem, stem);
    out.grad_pred = ops::add(g, ops::conv2d(g, gem[0], arch.gem->head), grad);
  }
  if (arch.cem) {
    cem = run_branch(g, *arch.cem, stem);
    out.coarse = ops::clamp01_output(g, ops::add(g, ops::conv2d(g, cem[0], arch.cem->head), low));
  }

  const auto& f = arch.fusion;
  Var<Scalar> z;
  for (int s = scales - 1; s >= 0; --s) {
    std::vector<Var<Scalar>> parts;
    if (z) parts.push_back(upsample_conv(g, f.up[s], z));
    parts.push_back(peripheral[s]);
    if (arch.gem) parts.push_back(gem[s]);
    if (arch.cem) parts.push_back(cem[s]);
    z = ops::conv2d(g, ops::concat(g, parts), f.fuse[s]);
    z = sccam_forward(g, f.blocks[s], z);
  }
  out.final = ops::clamp01_output(g, ops::add(g, ops::conv2d(g, z, f.head), low));
  return out;
}

void check_forward_input(const ModelConfig& config, const FeatureMap& low, const FeatureMap& grad) {
  require(low.channels() == 3, "forward: low-light input must have 3 channels");
  require(grad.channels() == 1, "forward: gradient map must have 1 channel");
  require(low.same_extent(grad), "forward: gradient map is not congruent with the input (" + low.shape_string() +
                                     " vs " + grad.shape_string() + ")");
  const int d = config.divisor();
  require(low.height() % d == 0 && low.width() % d == 0,
          "forward: height and width must be multiples of " + std::to_string(d) + ", got " +
              std::to_string(low.height()) + "x" + std::to_string(low.width()));
}

ForwardOutput forward(const Model& model, const Image& low, const GradientMap& grad, const NormHooks& hooks) {
  check_forward_input(model.config(), low.planes(), grad.planes());
  Graph<float> g(model.parameters(), false);
  g.capture_norm_stats(hooks.capture);
  g.replay_norm_stats(hooks.replay);
  auto outs = forward_graph(g, model, g.constant(low.planes()), g.constant(grad.planes()));
  ForwardOutput result{Image(std::move(outs.final->value)), std::nullopt, std::nullopt};
  if (outs.coarse) result.coarse = Image(std::move(outs.coarse->value));
  if (outs.grad_pred) result.grad_pred = GradientMap(std::move(outs.grad_pred->value));
  return result;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

template class BasicModel<float>;
template class BasicModel<double>;

#define DDNET_INSTANTIATE(S)                                                                                      \
  template GraphOutputs<S> forward_graph(Graph<S>&, const BasicModel<S>&, const Var<S>&, const Var<S>&);         \
  template Var<S> sccam_forward(Graph<S>&, const ScCamSpec&, const Var<S>&);                                     \
  template Var<S> sam_forward(Graph<S>&, const SamSpec&, const Var<S>&);                                         \
  template Var<S> scm_forward(Graph<S>&, const ScmSpec&, const Var<S>&);

DDNET_INSTANTIATE(float)
DDNET_INSTANTIATE(double)
#undef DDNET_INSTANTIATE

}  // namespace ddnet
