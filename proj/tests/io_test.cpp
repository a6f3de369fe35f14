// Copyright 2026 The Airpath MPC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "airpath/io.hpp"

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace airpath {
namespace {

using airpath::testing::default_grid;

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(GridJson, RoundTripIsExact) {
  const ModelGrid& g = default_grid();
  const PenaltyGrid pg = build_penalty_grid(g, default_tracking_weights());
  const GridFile back = grid_from_json(grid_to_json(g, {pg}));
  ASSERT_EQ(back.grid.mesh(), g.mesh());
  for (std::size_t k = 0; k < g.nodes().size(); ++k) {
    const LocalModel& a = g.nodes()[k];
    const LocalModel& b = back.grid.nodes()[k];
    EXPECT_EQ(a.A, b.A);
    EXPECT_EQ(a.B, b.B);
    EXPECT_EQ(a.Bf, b.Bf);
    EXPECT_EQ(a.x_ss, b.x_ss);
    EXPECT_EQ(a.u_ss, b.u_ss);
    EXPECT_EQ(a.w_inj_ss, b.w_inj_ss);
  }
  ASSERT_EQ(back.penalties.size(), 1u);
  EXPECT_EQ(back.penalties[0].weights(), pg.weights());
  for (std::size_t k = 0; k < g.nodes().size(); ++k) {
    EXPECT_EQ(back.penalties[0].nodes()[k].reduced, pg.nodes()[k].reduced);
  }
}

TEST(GridJson, SchemaErrorsNameThePath) {
  const std::string good = grid_to_json(ModelGrid(Mesh({1000.0, 2000.0}, {10.0, 20.0}), std::vector<LocalModel>(4)));
  EXPECT_NO_THROW(grid_from_json(good));
  try {
    grid_from_json(R"({"speed_breakpoints": [1000, 2000], "fuel_breakpoints": [10, 20], "nodes": [{}]})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nodes"), std::string::npos) << e.what();
  }
  EXPECT_THROW(grid_from_json("{not json"), ConfigError);
}

TEST(RunConfig, MinimalDocumentGetsDefaults) {
  const RunConfig rc = parse_run_config(R"({"scenario": {"kind": "fuel_step"}})");
  EXPECT_EQ(rc.sim.ff_mode, FfMode::kNone);
  EXPECT_EQ(rc.sim.fb.horizon, 50);
  EXPECT_EQ(rc.sim.fb.slack_weight, 1e6);
  EXPECT_EQ(rc.sim.ff.Q_ff, Mat2(Vec2(100.0, 2500.0).asDiagonal()));
  EXPECT_EQ(rc.identification.n_speed, 9u);
  EXPECT_EQ(rc.identification.n_fuel, 11u);
  ASSERT_EQ(rc.scenario.segments.size(), 1u);
  EXPECT_EQ(*rc.scenario.segments[0].kind, ScenarioKind::kFuelStep);
  EXPECT_FALSE(rc.grid_path.has_value());
}

TEST(RunConfig, ResolvedConfigRoundTrips) {
  const RunConfig rc = parse_run_config(R"({
    "ff_mode": "mpc", "seed": 9, "measurement_noise": [0.001, 0.0005],
    "fb_mpc": {"horizon": 30, "x_max": [2.5, null]},
    "ff_mpc": {"R_ff": [[0.02, 0], [0, 0.03]]},
    "scenario": [{"kind": "fuel_step", "fuel_high": 60}, {"kind": "speed_ramp"}]})");
  const std::string once = run_config_to_json(rc);
  const RunConfig again = parse_run_config(once);
  EXPECT_EQ(run_config_to_json(again), once);
  EXPECT_EQ(again.sim.fb.horizon, 30);
  EXPECT_TRUE(std::isinf(again.sim.fb.x_max(1)));
  EXPECT_EQ(again.sim.ff.R_ff(1, 1), 0.03);
  EXPECT_EQ(again.seed, 9u);
}

TEST(RunConfig, ErrorsNameTheFieldPath) {
  EXPECT_NE(config_error("{}").find("/scenario: missing required field"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenario": {"kind": "fuel_step"}, "colour": 1})").find("/colour: unknown field"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenario": {"kind": "fuel_step"}, "fb_mpc": {"horizon": "x"}})")
                .find("/fb_mpc/horizon"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenario": [{"kind": "fuel_step"}, {"kind": "warp"}]})").find("/scenario/1/kind"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenario": {"kind": "fuel_step"}, "ff_mode": "pid"})").find("/ff_mode"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenario": {"kind": "fuel_step"}, "plant": {"k_b": -1}})").find("k_b"),
            std::string::npos);
}

TEST(RunConfig, ScenarioBuildsPerSeed) {
  const RunConfig rc = parse_run_config(R"({"scenario": {"kind": "synthetic_cycle", "cycle_duration": 30}})");
  const SetpointMap map = SetpointMap::from_grid(default_grid());
  const Scenario a = build_scenario(rc.scenario, 1, map);
  const Scenario b = build_scenario(rc.scenario, 2, map);
  ASSERT_EQ(a.size(), 1500u);
  EXPECT_NE(a.rho[700].engine_speed, b.rho[700].engine_speed);
}

TEST(PlantJson, RoundTrip) {
  PlantParams p;
  p.k_b_scale = 1.1;
  p.calibration.base = Vec2(50.0, 65.0);
  const PlantParams back = parse_plant_params(plant_params_to_json(p));
  EXPECT_EQ(back.k_b_scale, 1.1);
  EXPECT_EQ(back.calibration.base, p.calibration.base);
  EXPECT_EQ(plant_params_to_json(back), plant_params_to_json(p));
}

TEST(Files, AtomicWriteAndRead) {
  const auto dir = std::filesystem::temp_directory_path() / "airpath_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  write_text_file_atomic(path, "first");
  write_text_file_atomic(path, "second");
  EXPECT_EQ(read_text_file(path), "second");
  EXPECT_EQ(file_sha256(path), sha256_hex("second"));
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    EXPECT_EQ(entry.path().filename(), "out.txt");  // no temporaries left behind
  }
  EXPECT_THROW(read_text_file(dir / "missing.txt"), ConfigError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace airpath
