// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "ddnet/checkpoint.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ddnet;
namespace fs = std::filesystem;

namespace {

ErrorKind load_error(const fs::path& path) {
  try {
    load_checkpoint(path);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("load succeeded");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise, Adam state included") {
  testing::TempDir dir("ckpt");
  auto cfg = testing::tiny_config();
  cfg.use_cem = false;
  const Model model = build_model(cfg, 99);
  AdamState adam = AdamState::zeros_like(model.parameters());
  for (std::size_t i = 0; i < adam.first.size(); ++i) {
    adam.first[i].setRandom();
    adam.second[i] = adam.first[i].cwiseAbs();
  }
  save_checkpoint(dir / "a.ckpt", model, 1234, 7, &adam);
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.model.config() == cfg);
  CHECK(ck.model.seed() == 99);
  CHECK(ck.step == 1234);
  CHECK(ck.epoch == 7);
  REQUIRE(ck.adam);
  const auto& a = model.parameters();
  const auto& b = ck.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].value == b[i].value);
    CHECK(ck.adam->first[i] == adam.first[i]);
    CHECK(ck.adam->second[i] == adam.second[i]);
  }
  const Image low = testing::random_image(3, 16, 16, 1);
  const GradientMap g(testing::random_planes(1, 16, 16, 2, -1, 1));
  CHECK(forward(model, low, g).final.planes().matrix() == forward(ck.model, low, g).final.planes().matrix());

  save_checkpoint(dir / "b.ckpt", model);
  CHECK_FALSE(load_checkpoint(dir / "b.ckpt").adam);
}

TEST_CASE("damaged checkpoints raise checkpoint errors") {
  testing::TempDir dir("ckpt_bad");
  const Model model = build_model(testing::tiny_config(), 1);
  save_checkpoint(dir / "good.ckpt", model);
  std::ifstream in(dir / "good.ckpt", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  CHECK(load_error(dir / "absent.ckpt") == ErrorKind::checkpoint);
  CHECK(load_error(write("magic.ckpt", "NOTACKPT" + bytes.substr(8))) == ErrorKind::checkpoint);
  CHECK(load_error(write("short.ckpt", bytes.substr(0, bytes.size() - 10))) == ErrorKind::checkpoint);
  CHECK(load_error(write("tiny.ckpt", bytes.substr(0, 10))) == ErrorKind::checkpoint);
  CHECK(load_error(write("long.ckpt", bytes + "xx")) == ErrorKind::checkpoint);

  std::string version = bytes;
  version[8] = 9;
  CHECK(load_error(write("version.ckpt", version)) == ErrorKind::checkpoint);

  // Header edited to claim a different architecture: the parameter table no
  // longer matches the rebuilt model.
  std::string edited = bytes;
  const auto pos = edited.find("\"base_channels\":4");
  REQUIRE(pos != std::string::npos);
  edited[pos + 16] = '6';
  CHECK(load_error(write("arch.ckpt", edited)) == ErrorKind::checkpoint);

  std::string garbled = bytes;
  garbled[25] = '}';
  CHECK(load_error(write("json.ckpt", garbled)) == ErrorKind::checkpoint);
}
