// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <limits>
#include <set>

#include "ddnet/metrics.hpp"
#include "ddnet/trainer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ddnet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.model = testing::tiny_config();
  cfg.patch = 16;
  cfg.batch = 2;
  cfg.seed = 5;
  return cfg;
}

PairedSample tiny_sample(std::uint64_t seed, int size = 16) {
  const Image high = testing::random_image(3, size, size, seed, 0.2f, 1.0f);
  FeatureMap low = high.planes();
  low.matrix() *= 0.3f;
  return make_pair(Image(low), high, "s" + std::to_string(seed));
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule decays tenfold every 20 epochs") {
  const TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == 1e-3);
  CHECK(lr_schedule(20, cfg) == 1e-4);
  CHECK(lr_schedule(40, cfg) == 1e-5);
  CHECK(lr_schedule(60, cfg) == 1e-6);
  CHECK(lr_schedule(80, cfg) == 1e-7);
  CHECK(lr_schedule(19, cfg) == 1e-3);
  CHECK(lr_schedule(99, cfg) == 1e-7);
  std::set<double> distinct;
  for (int e = 0; e < cfg.epochs; ++e) distinct.insert(lr_schedule(e, cfg));
  CHECK(distinct.size() == 5);
  CHECK_THROWS_AS(lr_schedule(100, cfg), Error);
  CHECK_THROWS_AS(lr_schedule(-1, cfg), Error);

  TrainConfig half;
  half.decay_factor = 0.5;
  half.decay_every = 3;
  CHECK(lr_schedule(7, half) == 1e-3 / 4);
  TrainConfig odd;
  odd.decay_factor = 0.3;
  CHECK(lr_schedule(40, odd) == doctest::Approx(1e-3 * 0.09).epsilon(1e-12));
}

TEST_CASE("config keys parse and round-trip through entries()") {
  TrainConfig cfg;
  cfg.set("epochs", "3");
  cfg.set("w1", "0");
  cfg.set("final_loss", "sum");
  cfg.set("use_sam", "false");
  cfg.set("base_channels", " 8 ");
  cfg.set("train_root", "data/lol");
  CHECK(cfg.epochs == 3);
  CHECK(cfg.weights.lap == 0);
  CHECK(cfg.final_form == FinalLossForm::literal_sum);
  CHECK_FALSE(cfg.model.use_sam);
  CHECK(cfg.model.base_channels == 8);

  testing::TempDir dir("cfg");
  {
    std::ofstream out(dir / "c.txt");
    out << "# comment\n\n";
    for (const auto& [k, v] : cfg.entries()) out << k << " = " << v << "  # trailing\n";
  }
  const auto back = TrainConfig::from_file(dir / "c.txt");
  CHECK(back.entries() == cfg.entries());

  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::io;
  };
  CHECK(kind_of([&] { cfg.set("epoch", "3"); }) == ErrorKind::argument);
  CHECK(kind_of([&] { cfg.set("epochs", "3x"); }) == ErrorKind::argument);
  CHECK(kind_of([&] { cfg.set("flip", "maybe"); }) == ErrorKind::argument);
  CHECK(kind_of([&] { TrainConfig::from_file(dir / "none.txt"); }) == ErrorKind::io);
  TrainConfig bad;
  bad.patch = 90;  // not a multiple of 4
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ablated heads drop their loss terms") {
  TrainConfig cfg;
  cfg.model.use_gem = false;
  CHECK(effective_weights(cfg).lap == 0);
  CHECK(effective_weights(cfg).coarse == 0.2);
  cfg.model.use_cem = false;
  CHECK(effective_weights(cfg).coarse == 0);
  CHECK(effective_weights(cfg).final == 0.6);
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  const Model model = build_model(testing::tiny_config(), 3);
  const std::vector<PairedSample> batch = {tiny_sample(1), tiny_sample(2)};
  std::vector<RowMatrix<float>> both, a, b;
  const auto lb = compute_gradients(model, batch, {}, FinalLossForm::mean, both);
  const auto la = compute_gradients(model, std::span(batch).first(1), {}, FinalLossForm::mean, a);
  const auto lc = compute_gradients(model, std::span(batch).last(1), {}, FinalLossForm::mean, b);
  CHECK(lb.total == doctest::Approx((la.total + lc.total) / 2).epsilon(1e-9));
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i].isApprox(0.5f * (a[i] + b[i]), 1e-4f));
}

TEST_CASE("first Adam step moves each parameter by about lr") {
  TrainConfig cfg = tiny_train_config();
  TrainState state = make_state(cfg);
  const Model before = state.model;
  const std::vector<PairedSample> batch = {tiny_sample(1)};
  std::vector<RowMatrix<float>> grads;
  compute_gradients(before, batch, cfg.weights, cfg.final_form, grads);
  train_step(state, batch, cfg, 1e-3);
  CHECK(state.step == 1);
  int checked = 0;
  for (int i = 0; i < before.parameters().size(); ++i) {
    const auto& g = grads[i];
    const RowMatrix<float> delta = state.model.parameters()[i].value - before.parameters()[i].value;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      if (std::abs(g.data()[j]) < 1e-4f) continue;
      // Bias-corrected first step: -lr * g / |g|.
      CHECK(delta.data()[j] == doctest::Approx(g.data()[j] > 0 ? -1e-3 : 1e-3).epsilon(1e-3));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("training steps are deterministic and descend") {
  TrainConfig cfg = tiny_train_config();
  const std::vector<PairedSample> batch = {tiny_sample(1), tiny_sample(2)};
  TrainState a = make_state(cfg), b = make_state(cfg);
  std::vector<double> losses;
  for (int i = 0; i < 200; ++i) {
    losses.push_back(train_step(a, batch, cfg, 1e-3).total);
    if (i < 3) train_step(b, batch, cfg, 1e-3);
  }
  TrainState c = make_state(cfg);
  for (int i = 0; i < 3; ++i) train_step(c, batch, cfg, 1e-3);
  for (int i = 0; i < b.model.parameters().size(); ++i)
    CHECK(b.model.parameters()[i].value == c.model.parameters()[i].value);
  CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("final-only weights report the SSIM term alone") {
  TrainConfig cfg = tiny_train_config();
  cfg.weights = {0, 0, 1};
  TrainState s = make_state(cfg);
  const std::vector<PairedSample> batch = {tiny_sample(4)};
  const auto loss = train_step(s, batch, cfg, 1e-3);
  CHECK(loss.total == loss.final);
  CHECK(loss.lap > 0);
  CHECK(loss.coarse > 0);
}

TEST_CASE("non-finite values raise numeric errors") {
  TrainConfig cfg = tiny_train_config();
  TrainState s = make_state(cfg);
  s.model.parameters()[0].value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const std::vector<PairedSample> batch = {tiny_sample(4)};
  try {
    train_step(s, batch, cfg, 1e-3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("s4") != std::string::npos);
  }
}

TEST_CASE("epoch order mixes real and synthetic samples one to one") {
  DatasetManifest real, synth;
  for (int i = 0; i < 4; ++i) real.pairs.push_back({"", "", "r" + std::to_string(i)});
  for (int i = 0; i < 10; ++i) synth.pairs.push_back({"", "", "s" + std::to_string(i)});
  const auto order = epoch_order(&real, &synth, 1, 0);
  CHECK(order.size() == 8);
  int reals = 0;
  for (const auto& e : order) reals += e.id[0] == 'r';
  CHECK(reals == 4);
  CHECK(epoch_order(&real, &synth, 1, 0).front().id == order.front().id);
  bool differs = false;
  for (int e = 1; e < 6 && !differs; ++e) {
    const auto other = epoch_order(&real, &synth, 1, e);
    for (std::size_t i = 0; i < order.size(); ++i) differs |= other[i].id != order[i].id;
  }
  CHECK(differs);
  CHECK(epoch_order(&real, nullptr, 1, 0).size() == 4);
  CHECK(epoch_order(nullptr, &synth, 1, 0).size() == 10);
}

TEST_CASE("train writes logs and checkpoints, and resume continues the run") {
  testing::TempDir dir("train");
  testing::write_pair_dataset(dir / "data", 8, 20, 20, 1);
  TrainConfig cfg = tiny_train_config();
  cfg.train_root = dir / "data";
  cfg.batch = 8;
  cfg.epochs = 1;
  cfg.out_dir = dir / "one";
  std::vector<StepRecord> records;
  const auto path = train(cfg, [&](const StepRecord& r) { records.push_back(r); });
  CHECK(records.size() == 1);
  CHECK(load_checkpoint(path).step == 1);
  CHECK(lines_of(cfg.out_dir / "train_log.csv").size() == 2);
  CHECK(fs::exists(cfg.out_dir / "config.txt"));

  cfg.batch = 4;
  cfg.epochs = 4;
  cfg.checkpoint_every = 2;
  cfg.decay_every = 1;
  cfg.decay_factor = 0.5;
  cfg.out_dir = dir / "full";
  std::vector<StepRecord> full;
  const auto full_path = train(cfg, [&](const StepRecord& r) { full.push_back(r); });
  REQUIRE(full.size() == 8);
  CHECK(fs::exists(cfg.out_dir / "epoch_002.ckpt"));
  CHECK(full[5].lr == 1e-3 / 4);

  TrainConfig resumed = cfg;
  resumed.out_dir = dir / "resumed";
  resumed.resume = dir / "full/epoch_002.ckpt";
  std::vector<StepRecord> rest;
  const auto rest_path = train(resumed, [&](const StepRecord& r) { rest.push_back(r); });
  REQUIRE(rest.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(rest[i].step == full[4 + i].step);
    CHECK(rest[i].lr == full[4 + i].lr);
    CHECK(rest[i].loss.total == full[4 + i].loss.total);
  }
  const auto x = load_checkpoint(full_path), y = load_checkpoint(rest_path);
  for (int i = 0; i < x.model.parameters().size(); ++i)
    CHECK(x.model.parameters()[i].value == y.model.parameters()[i].value);

  TrainConfig wrong = resumed;
  wrong.model.base_channels = 6;
  try {
    train(wrong);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::checkpoint);
  }
  TrainConfig none = tiny_train_config();
  CHECK_THROWS_AS(train(none), Error);
}

TEST_CASE("evaluate: a zero network reproduces the plain input baseline") {
  testing::TempDir dir("eval");
  testing::write_pair_dataset(dir.path(), 3, 24, 20, 3);
  const auto manifest = scan_dataset(dir.path(), Split::test);
  Model zero = build_model(testing::tiny_config(), 1);
  zero.zero();
  const auto report = evaluate(zero, manifest);
  REQUIRE(report.per_image.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Image low = load_image(manifest.pairs[i].low), high = load_image(manifest.pairs[i].normal);
    CHECK(report.per_image[i].psnr == doctest::Approx(psnr(low, high)).epsilon(1e-9));
    CHECK(report.per_image[i].ssim == doctest::Approx(ssim(low, high)).epsilon(1e-9));
  }

  // Ground truth scored against itself.
  testing::TempDir same("eval_same");
  fs::create_directories(same / "low");
  fs::create_directories(same / "high");
  for (int i = 0; i < 2; ++i) {
    const Image img = testing::random_image(3, 16, 16, 10 + i);
    save_image(img, same / "low" / (std::to_string(i) + ".png"));
    save_image(img, same / "high" / (std::to_string(i) + ".png"));
  }
  const auto self = evaluate(zero, scan_dataset(same.path()));
  CHECK(self.psnr_mean == kPsnrCap);
  CHECK(std::abs(self.ssim_mean - 1.0) < 1e-9);
  CHECK(self.psnr_std == 0);
}
