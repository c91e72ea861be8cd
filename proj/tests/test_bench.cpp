// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "ddnet/bench.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace ddnet;

TEST_CASE("resolution parsing") {
  CHECK(parse_resolution("800x600") == Resolution{800, 600});
  CHECK(parse_resolution("3840X2160").label() == "3840x2160");
  for (const char* bad : {"800", "x600", "800x", "0x10", "-5x5", "8x6x2", "99999999999x2"}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_resolution(bad), Error);
  }
}

TEST_CASE("default table rows and reference annotation") {
  const auto res = default_resolutions();
  REQUIRE(res.size() == 4);
  CHECK(res.front() == Resolution{800, 600});
  CHECK(res.back() == Resolution{3840, 2160});
  CHECK(*reference_seconds(res[0]) == 0.021);
  CHECK(*reference_seconds(res[3]) == 0.027);
  CHECK_FALSE(reference_seconds({64, 64}));
}

TEST_CASE("option validation") {
  BenchOptions o;
  CHECK_NOTHROW(o.validate());
  o.repeats = 2;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.warmup = 0;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.tile = 64;
  CHECK_THROWS_AS(o.validate(), Error);
}

TEST_CASE("bench rows, table and JSON") {
  const Model model = build_model(testing::tiny_config(), 1);
  BenchOptions o;
  o.resolutions = {{32, 24}, {64, 48}};
  const auto rows = run_bench(model, o);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.mean_seconds > 0);
    CHECK(r.std_seconds >= 0);
    CHECK(r.fps == doctest::Approx(1.0 / r.mean_seconds).epsilon(1e-12));
    CHECK(r.repeats == 3);
    CHECK_FALSE(r.tiled);
  }
  std::ostringstream table;
  print_bench_table(table, rows);
  const std::string text = table.str();
  CHECK(text.find("32x24") != std::string::npos);
  CHECK(text.find("reference_s: published GPU timings") != std::string::npos);

  testing::TempDir dir("bench");
  write_bench_json(dir / "sub/b.json", model, rows, "x.ckpt");
  std::ifstream in(dir / "sub/b.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["device"] == "cpu");
  CHECK(j["results"].size() == 2);
  CHECK(j["results"][1]["resolution"] == "64x48");
  CHECK_FALSE(j["results"][0].contains("reference_seconds"));
}
