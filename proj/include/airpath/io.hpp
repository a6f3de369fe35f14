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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "airpath/identification.hpp"
#include "airpath/sim.hpp"
#include "airpath/terminal_penalty.hpp"

namespace airpath {

// Model-grid JSON: speed_breakpoints, fuel_breakpoints, nodes (row-major
// objects with A, B, Bf, x_ss, u_ss, w_inj_ss) and optional terminal_penalties.
struct GridFile {
  ModelGrid grid;
  std::vector<PenaltyGrid> penalties;
};

std::string grid_to_json(const ModelGrid& grid, const std::vector<PenaltyGrid>& penalties = {});
GridFile grid_from_json(const std::string& text);
GridFile load_grid_file(const std::filesystem::path& path);

/// One scenario source: a generated profile or a CSV file.
struct ScenarioSegment {
  std::optional<ScenarioKind> kind;
  ScenarioParams params;
  std::filesystem::path file;
};

struct ScenarioSpec {
  std::vector<ScenarioSegment> segments;  // concatenated in order
};

/// Builds the scenario for one seed (the seed only matters for synthetic cycles).
Scenario build_scenario(const ScenarioSpec& spec, std::uint64_t seed, const SetpointMap& map);

struct IdentificationSettings {
  std::size_t n_speed = 9;
  std::size_t n_fuel = 11;
  double speed_lo = 600.0, speed_hi = 2400.0;
  double fuel_lo = 5.0, fuel_hi = 105.0;
  PerturbationSpec perturbation;

  Mesh mesh() const { return uniform_mesh(speed_lo, speed_hi, n_speed, fuel_lo, fuel_hi, n_fuel); }
};

/// Run configuration document.
struct RunConfig {
  SimConfig sim;
  std::optional<std::filesystem::path> grid_path;  // identified on the fly when absent
  IdentificationSettings identification;
  ScenarioSpec scenario;
  std::uint64_t seed = 1;
};

/// Parses a run configuration; relative paths resolve against base_dir.
/// Schema violations throw ConfigError naming the offending field path.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Plant parameters alone (the identify command's input).
PlantParams parse_plant_params(const std::string& text);

/// Fully resolved configuration as JSON text (defaults filled in).
std::string run_config_to_json(const RunConfig& config);
std::string plant_params_to_json(const PlantParams& params);

std::string metrics_to_json(const Metrics& metrics);

/// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace airpath
