// SPDX-License-Identifier: Apache-2.0
#include "ddnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "ddnet/inference.hpp"

namespace ddnet {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorKind::argument, key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) fail(ErrorKind::argument, key + ": cannot parse '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(lr0 > 0, "lr0 must be positive");
  require(decay_factor > 0 && decay_factor <= 1, "decay_factor must be in (0, 1]");
  require(decay_every >= 1, "decay_every must be >= 1");
  require(batch >= 1, "batch must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(patch >= 1 && patch % model.divisor() == 0,
          "patch must be a positive multiple of " + std::to_string(model.divisor()));
  weights.validate();
  model.validate();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "epochs") epochs = parse_number<int>(key, v);
  else if (key == "lr0") lr0 = parse_number<double>(key, v);
  else if (key == "decay_factor") decay_factor = parse_number<double>(key, v);
  else if (key == "decay_every") decay_every = parse_number<int>(key, v);
  else if (key == "batch") batch = parse_number<int>(key, v);
  else if (key == "patch") patch = parse_number<int>(key, v);
  else if (key == "w1") weights.lap = parse_number<double>(key, v);
  else if (key == "w2") weights.coarse = parse_number<double>(key, v);
  else if (key == "w3") weights.final = parse_number<double>(key, v);
  else if (key == "final_loss") {
    if (v == "mean") final_form = FinalLossForm::mean;
    else if (v == "sum") final_form = FinalLossForm::literal_sum;
    else fail(ErrorKind::argument, "final_loss: expected 'mean' or 'sum'");
  }
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, v);
  else if (key == "clip_norm") clip_norm = parse_number<double>(key, v);
  else if (key == "beta1") beta1 = parse_number<double>(key, v);
  else if (key == "beta2") beta2 = parse_number<double>(key, v);
  else if (key == "adam_eps") adam_eps = parse_number<double>(key, v);
  else if (key == "flip") flip = parse_bool(key, v);
  else if (key == "train_root") train_root = v;
  else if (key == "synth_root") synth_root = v;
  else if (key == "out_dir") out_dir = v;
  else if (key == "resume") resume = v;
  else if (key == "base_channels") model.base_channels = parse_number<int>(key, v);
  else if (key == "num_scales") model.num_scales = parse_number<int>(key, v);
  else if (key == "use_sam") model.use_sam = parse_bool(key, v);
  else if (key == "use_scm") model.use_scm = parse_bool(key, v);
  else if (key == "use_gem") model.use_gem = parse_bool(key, v);
  else if (key == "use_cem") model.use_cem = parse_bool(key, v);
  else if (key == "prelu_init") model.prelu_init = parse_number<float>(key, v);
  else fail(ErrorKind::argument, "unknown config key '" + key + "'");
}

TrainConfig TrainConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::argument, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {{"epochs", std::to_string(epochs)},
          {"lr0", fmt(lr0)},
          {"decay_factor", fmt(decay_factor)},
          {"decay_every", std::to_string(decay_every)},
          {"batch", std::to_string(batch)},
          {"patch", std::to_string(patch)},
          {"w1", fmt(weights.lap)},
          {"w2", fmt(weights.coarse)},
          {"w3", fmt(weights.final)},
          {"final_loss", final_form == FinalLossForm::mean ? "mean" : "sum"},
          {"seed", std::to_string(seed)},
          {"checkpoint_every", std::to_string(checkpoint_every)},
          {"clip_norm", fmt(clip_norm)},
          {"beta1", fmt(beta1)},
          {"beta2", fmt(beta2)},
          {"adam_eps", fmt(adam_eps)},
          {"flip", flip ? "true" : "false"},
          {"train_root", train_root.string()},
          {"synth_root", synth_root.string()},
          {"out_dir", out_dir.string()},
          {"resume", resume.string()},
          {"base_channels", std::to_string(model.base_channels)},
          {"num_scales", std::to_string(model.num_scales)},
          {"use_sam", model.use_sam ? "true" : "false"},
          {"use_scm", model.use_scm ? "true" : "false"},
          {"use_gem", model.use_gem ? "true" : "false"},
          {"use_cem", model.use_cem ? "true" : "false"},
          {"prelu_init", fmt(model.prelu_init)}};
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0 && epoch < cfg.epochs,
          "lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  const int k = epoch / cfg.decay_every;
  // Multiplying by 0.1 k times drifts off 1e-5, 1e-6, ...; dividing by an
  // exact integer power does not.
  const double inv = std::round(1.0 / cfg.decay_factor);
  if (std::abs(inv * cfg.decay_factor - 1.0) < 1e-12) return cfg.lr0 / std::pow(inv, k);
  return cfg.lr0 * std::pow(cfg.decay_factor, k);
}

TrainState make_state(const TrainConfig& cfg) { return TrainState(build_model(cfg.model, cfg.seed)); }

LossWeights effective_weights(const TrainConfig& cfg) {
  LossWeights w = cfg.weights;
  if (!cfg.model.use_gem) w.lap = 0;
  if (!cfg.model.use_cem) w.coarse = 0;
  return w;
}

LossBreakdown compute_gradients(const Model& model, std::span<const PairedSample> batch, const LossWeights& weights,
                                FinalLossForm form, std::vector<RowMatrix<float>>& grads) {
  require(!batch.empty(), "train_step: empty batch");
  grads = model.parameters().zeros_like();
  LossBreakdown mean;
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (const auto& sample : batch) {
    check_forward_input(model.config(), sample.low.planes(), sample.grad_in.planes());
    Graph<float> g(model.parameters(), true);
    auto out = forward_graph(g, model, g.constant(sample.low.planes()), g.constant(sample.grad_in.planes()));
    OutputGradients<float> og;
    const auto loss = joint_loss(out.final->value, out.coarse ? &out.coarse->value : nullptr,
                                 out.grad_pred ? &out.grad_pred->value : nullptr, sample.normal.planes(),
                                 sample.grad_gt.planes(), weights, form, &og);
    if (!std::isfinite(loss.total)) {
      const char* part = !std::isfinite(loss.lap) ? "lap" : !std::isfinite(loss.coarse) ? "coarse" : "final";
      fail(ErrorKind::numeric, "non-finite " + std::string(part) + " loss on sample '" + sample.id + "'");
    }
    og.final.matrix() *= inv;
    if (out.coarse) og.coarse.matrix() *= inv;
    if (out.grad_pred) og.grad_pred.matrix() *= inv;
    g.backward({{out.final, &og.final},
                {out.coarse, out.coarse ? &og.coarse : nullptr},
                {out.grad_pred, out.grad_pred ? &og.grad_pred : nullptr}});
    auto pg = g.take_param_grads();
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += pg[i];
    mean.lap += loss.lap;
    mean.coarse += loss.coarse;
    mean.final += loss.final;
  }
  const double n = static_cast<double>(batch.size());
  return combine(mean.lap / n, mean.coarse / n, mean.final / n, weights);
}

LossBreakdown train_step(TrainState& state, std::span<const PairedSample> batch, const TrainConfig& cfg) {
  return train_step(state, batch, cfg, lr_schedule(std::min(state.epoch, cfg.epochs - 1), cfg));
}

LossBreakdown train_step(TrainState& state, std::span<const PairedSample> batch, const TrainConfig& cfg, double lr) {
  std::vector<RowMatrix<float>> grads;
  const auto loss = compute_gradients(state.model, batch, effective_weights(cfg), cfg.final_form, grads);

  double norm2 = 0;
  for (const auto& g : grads) norm2 += g.cast<double>().squaredNorm();
  if (!std::isfinite(norm2)) fail(ErrorKind::numeric, "non-finite gradient at step " + std::to_string(state.step));
  const double norm = std::sqrt(norm2);
  const float clip = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;

  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(cfg.adam_eps);
  auto& params = state.model.parameters();
  for (int i = 0; i < params.size(); ++i) {
    auto g = (grads[i].array() * clip).eval();
    auto& m = state.adam.first[i];
    auto& v = state.adam.second[i];
    m.array() = b1 * m.array() + (1 - b1) * g;
    v.array() = b2 * v.array() + (1 - b2) * g.square();
    params[i].value.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
  if (!params.all_finite())
    fail(ErrorKind::numeric, "non-finite parameter after step " + std::to_string(state.step));
  state.step = t;
  return loss;
}

std::vector<ManifestEntry> epoch_order(const DatasetManifest* real, const DatasetManifest* synth, std::uint64_t seed,
                                       int epoch) {
  std::vector<ManifestEntry> order;
  std::mt19937_64 rng(mix_seed(seed, 0x5EED0000ull + static_cast<std::uint64_t>(epoch)));
  if (real) order = real->pairs;
  if (synth) {
    std::vector<ManifestEntry> pool = synth->pairs;
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t want = real ? real->pairs.size() : pool.size();
    for (std::size_t i = 0; i < want; ++i) order.push_back(pool[i % pool.size()]);
  }
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

fs::path train(const TrainConfig& cfg, const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  std::optional<DatasetManifest> real, synth;
  if (!cfg.train_root.empty()) real = scan_dataset(cfg.train_root);
  if (!cfg.synth_root.empty()) synth = scan_dataset(cfg.synth_root);
  if (!real && !synth) fail(ErrorKind::dataset, "no training data configured (set train_root and/or synth_root)");

  TrainState state = make_state(cfg);
  if (!cfg.resume.empty()) {
    auto ck = load_checkpoint(cfg.resume);
    if (!(ck.model.config() == cfg.model))
      fail(ErrorKind::checkpoint, "resume checkpoint architecture differs from the configured model");
    state.model = std::move(ck.model);
    state.adam = ck.adam ? std::move(*ck.adam) : AdamState::zeros_like(state.model.parameters());
    state.epoch = ck.epoch;
    state.step = ck.step;
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream dump(cfg.out_dir / "config.txt");
    for (const auto& [k, v] : cfg.entries()) dump << k << " = " << v << '\n';
  }
  const fs::path log_path = cfg.out_dir / "train_log.csv";
  const bool append = !cfg.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) fail(ErrorKind::io, "cannot write " + log_path.string());
  if (!append) log << "step,epoch,lr,lap,coarse,final,total\n";
  log.precision(9);

  const int divisor = cfg.model.divisor();
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    const auto order = epoch_order(real ? &*real : nullptr, synth ? &*synth : nullptr, cfg.seed, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      std::vector<PairedSample> batch;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint64_t s = mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(state.step)), i - begin);
        auto sample = sample_patch(load_pair(order[i]), cfg.patch, s, divisor);
        if (cfg.flip && (mix_seed(s, 1) & 1)) sample = flip_horizontal(sample);
        batch.push_back(std::move(sample));
      }
      const auto loss = train_step(state, batch, cfg, lr);
      StepRecord rec{state.step, epoch, lr, loss};
      log << rec.step << ',' << epoch << ',' << lr << ',' << loss.lap << ',' << loss.coarse << ',' << loss.final << ','
          << loss.total << '\n';
      if (on_step) on_step(rec);
    }
    state.epoch = epoch + 1;
    if (state.epoch % cfg.checkpoint_every == 0 && state.epoch < cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", state.epoch);
      save_checkpoint(cfg.out_dir / name, state.model, state.step, state.epoch, &state.adam);
    }
    log.flush();
  }
  const fs::path final_path = cfg.out_dir / "final.ckpt";
  save_checkpoint(final_path, state.model, state.step, state.epoch, &state.adam);
  return final_path;
}

MetricReport evaluate(const Model& model, const DatasetManifest& manifest) {
  std::vector<MetricRow> rows;
  rows.reserve(manifest.pairs.size());
  for (const auto& entry : manifest.pairs) {
    const Image low = load_image(entry.low);
    const Image normal = load_image(entry.normal);
    if (!low.planes().same_shape(normal.planes()))
      fail(ErrorKind::dataset, "sample '" + entry.id + "': low and high sizes differ");
    const Image out = enhance_image(model, low);
    rows.push_back({entry.id, psnr(out, normal), ssim(out, normal)});
  }
  return aggregate(std::move(rows));
}

}  // namespace ddnet
