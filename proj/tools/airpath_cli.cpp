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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "airpath/compare.hpp"
#include "airpath/io.hpp"
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Default output location: $AIRPATH_OUT_ROOT/<name>, else ./airpath_out/<name>.
fs::path default_out(const std::string& name) {
  const char* root = std::getenv("AIRPATH_OUT_ROOT");
  return fs::path(root && *root ? root : "airpath_out") / name;
}

struct MeshSize {
  std::size_t n_speed = 9;
  std::size_t n_fuel = 11;
};

MeshSize parse_mesh(const std::string& text) {
  const auto x = text.find('x');
  auto parse = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw airpath::ConfigError("--mesh: expected <speed>x<fuel>, got '" + text + "'");
    }
    const unsigned long v = std::stoul(s);
    if (v < 2 || v > 200) throw airpath::ConfigError("--mesh: node counts must lie in [2, 200]");
    return v;
  };
  if (x == std::string::npos) throw airpath::ConfigError("--mesh: expected <speed>x<fuel>, got '" + text + "'");
  return {parse(text.substr(0, x)), parse(text.substr(x + 1))};
}

std::vector<airpath::PenaltyGrid> penalties_for(const airpath::ModelGrid& grid, const airpath::FbMpcConfig& fb) {
  std::vector<airpath::PenaltyGrid> out;
  if (fb.penalty_source != airpath::PenaltySource::kInterpolatedGrid) return out;
  for (const airpath::TrackingWeights& w : fb.regions.distinct_weights()) {
    out.push_back(airpath::build_penalty_grid(grid, w, fb.dare));
  }
  return out;
}

void print_fit_summary(const airpath::Mesh& mesh, const std::vector<airpath::FitReport>& reports) {
  double worst[2] = {0.0, 0.0};
  double worst_rho = 0.0;
  std::size_t worst_node[2] = {0, 0};
  std::printf("%8s %8s %12s %12s %8s\n", "Ne[rpm]", "winj[mg]", "rms_pim[%]", "rms_egr[%]", "rho(A)");
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const airpath::FitReport& r = reports[k];
    const airpath::OperatingPoint p = mesh.node(k / mesh.fuel().size(), k % mesh.fuel().size());
    double rel[2];
    for (int s = 0; s < 2; ++s) {
      rel[s] = r.signal_range(s) > 0.0 ? 100.0 * r.residual_rms(s) / r.signal_range(s) : 0.0;
      if (rel[s] > worst[s]) {
        worst[s] = rel[s];
        worst_node[s] = k;
      }
    }
    worst_rho = std::max(worst_rho, r.spectral_radius);
    std::printf("%8.0f %8.1f %12.4f %12.4f %8.4f\n", p.engine_speed, p.fuel_rate, rel[0], rel[1], r.spectral_radius);
  }
  std::printf("nodes: %zu  worst residual: p_im %.4f%% (node %zu), chi_egr %.4f%% (node %zu)  max spectral radius %.4f\n",
              reports.size(), worst[0], worst_node[0], worst[1], worst_node[1], worst_rho);
}

struct LoadedGrid {
  airpath::GridFile file;
  json source;  // manifest entry describing where the grid came from
};

LoadedGrid obtain_grid(const airpath::RunConfig& rc, std::map<std::string, std::string>& digests) {
  LoadedGrid out;
  if (rc.grid_path) {
    out.file = airpath::load_grid_file(*rc.grid_path);
    digests[rc.grid_path->string()] = airpath::file_sha256(*rc.grid_path);
    out.source = {{"path", rc.grid_path->string()}};
  } else {
    std::fprintf(stderr, "identifying %zux%zu model grid...\n", rc.identification.n_speed, rc.identification.n_fuel);
    out.file.grid = airpath::build_grid(rc.sim.plant, rc.identification.mesh(), rc.identification.perturbation);
    out.source = {{"identified", true}};
  }
  if (out.file.penalties.empty()) out.file.penalties = penalties_for(out.file.grid, rc.sim.fb);
  out.source["sha256"] = airpath::sha256_hex(airpath::grid_to_json(out.file.grid));
  return out;
}

json manifest(const std::string& command, const airpath::RunConfig& rc, const std::map<std::string, std::string>& digests,
              json extra) {
  json inputs = json::object();
  for (const auto& [path, digest] : digests) inputs[path] = digest;
  json m{{"tool", "airpath"},
         {"version", AIRPATH_VERSION},
         {"command", command},
         {"seed", rc.seed},
         {"config", json::parse(airpath::run_config_to_json(rc))},
         {"inputs", inputs}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  return m;
}

void collect_scenario_digests(const airpath::RunConfig& rc, std::map<std::string, std::string>& digests) {
  for (const airpath::ScenarioSegment& s : rc.scenario.segments) {
    if (!s.kind) digests[s.file.string()] = airpath::file_sha256(s.file);
  }
}

int cmd_identify(const std::string& plant_path, const fs::path& out, const std::string& mesh_text) {
  const MeshSize ms = parse_mesh(mesh_text);
  const airpath::PlantParams plant = airpath::parse_plant_params(airpath::read_text_file(plant_path));
  airpath::IdentificationSettings id;
  id.n_speed = ms.n_speed;
  id.n_fuel = ms.n_fuel;
  std::vector<airpath::FitReport> reports;
  const airpath::ModelGrid grid = airpath::build_grid(plant, id.mesh(), id.perturbation, &reports);
  const std::vector<airpath::PenaltyGrid> penalties = penalties_for(grid, airpath::FbMpcConfig{});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  airpath::write_text_file_atomic(out, airpath::grid_to_json(grid, penalties) + "\n");
  print_fit_summary(grid.mesh(), reports);
  std::printf("wrote %s\n", out.string().c_str());
  return kExitOk;
}

int cmd_run(const fs::path& config_path, fs::path out) {
  const airpath::RunConfig rc = airpath::load_run_config(config_path);
  std::map<std::string, std::string> digests{{config_path.string(), airpath::file_sha256(config_path)}};
  collect_scenario_digests(rc, digests);
  if (out.empty()) out = default_out("run-" + config_path.stem().string());

  const LoadedGrid g = obtain_grid(rc, digests);
  const airpath::SetpointMap map = airpath::SetpointMap::from_grid(g.file.grid);
  const airpath::Scenario scenario = airpath::build_scenario(rc.scenario, rc.seed, map);

  const auto t0 = std::chrono::steady_clock::now();
  const airpath::SimTrace trace =
      airpath::run_closed_loop(rc.sim, g.file.grid, map, scenario, rc.seed, &g.file.penalties);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const airpath::Metrics metrics = airpath::compute_metrics(trace);

  fs::create_directories(out);
  std::ostringstream csv;
  airpath::write_trace_csv(csv, trace);
  airpath::write_text_file_atomic(out / "trace.csv", csv.str());
  airpath::write_text_file_atomic(out / "metrics.json", airpath::metrics_to_json(metrics) + "\n");
  airpath::write_text_file_atomic(
      out / "manifest.json",
      manifest("run", rc, digests, {{"grid", g.source}, {"trace_sha256", airpath::sha256_hex(csv.str())}}).dump(2) + "\n");

  std::printf("%zu steps in %.2f s  mean |e|: p_im %.6f bar, chi_egr %.6f\n", trace.rows.size(), wall,
              metrics.p_im.mean_abs_error, metrics.chi_egr.mean_abs_error);
  std::printf("wrote %s\n", out.string().c_str());
  return kExitOk;
}

int cmd_compare(const fs::path& config_path, const std::string& modes_text, const std::string& seeds_text,
                unsigned jobs, fs::path out) {
  airpath::CompareOptions opt;
  opt.modes = airpath::parse_mode_list(modes_text);
  opt.seeds = airpath::parse_seed_list(seeds_text);
  opt.jobs = jobs;
  const airpath::RunConfig rc = airpath::load_run_config(config_path);
  std::map<std::string, std::string> digests{{config_path.string(), airpath::file_sha256(config_path)}};
  collect_scenario_digests(rc, digests);
  if (out.empty()) out = default_out("compare-" + config_path.stem().string());

  const LoadedGrid g = obtain_grid(rc, digests);
  fs::create_directories(out / "cells");
  opt.cell_dir = out / "cells";
  const airpath::CompareResult result =
      airpath::run_comparison(rc, g.file.grid, g.file.penalties, opt, [](const airpath::CompareCell& c) {
        if (c.ok) {
          std::fprintf(stderr, "  %-4s seed %-3llu %.1f s\n", airpath::to_string(c.mode),
                       static_cast<unsigned long long>(c.seed), c.wall_seconds);
        } else {
          std::fprintf(stderr, "  %-4s seed %-3llu FAILED: %s\n", airpath::to_string(c.mode),
                       static_cast<unsigned long long>(c.seed), c.error.c_str());
        }
      });

  const std::string table = airpath::comparison_table_text(result);
  airpath::write_text_file_atomic(out / "comparison.txt", table);
  airpath::write_text_file_atomic(out / "comparison.json", airpath::comparison_to_json(result) + "\n");
  json modes = json::array();
  for (airpath::FfMode m : opt.modes) modes.push_back(airpath::to_string(m));
  airpath::write_text_file_atomic(
      out / "manifest.json",
      manifest("compare", rc, digests, {{"grid", g.source}, {"modes", modes}, {"seeds", opt.seeds}}).dump(2) + "\n");

  std::fputs(table.c_str(), stdout);
  std::printf("wrote %s\n", out.string().c_str());
  const bool any_ok = std::any_of(result.cells.begin(), result.cells.end(), [](const auto& c) { return c.ok; });
  return any_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diesel airpath MPC: grid identification, closed-loop runs and controller comparisons"};
  app.set_version_flag("--version", std::string(AIRPATH_VERSION));
  app.require_subcommand(1);

  std::string plant_path, mesh_text = "9x11", modes_text = "none,lut,mpc", seeds_text = "1..5";
  fs::path out, config_path;
  unsigned jobs = 1;

  CLI::App* identify = app.add_subcommand("identify", "Identify the LPV model grid of a plant");
  identify->add_option("--plant", plant_path, "Plant parameter JSON")->required();
  identify->add_option("--out", out, "Output grid JSON")->required();
  identify->add_option("--mesh", mesh_text, "Mesh size <speed>x<fuel>");

  CLI::App* run = app.add_subcommand("run", "Run one closed-loop simulation");
  run->add_option("--config", config_path, "Run configuration JSON")->required();
  run->add_option("--out", out, "Output directory (default $AIRPATH_OUT_ROOT/run-<config>)");

  CLI::App* compare = app.add_subcommand("compare", "Compare feedforward modes over seeds");
  compare->add_option("--config", config_path, "Run configuration JSON")->required();
  compare->add_option("--modes", modes_text, "Comma-separated modes: none, lut, mpc");
  compare->add_option("--seeds", seeds_text, "Seeds, e.g. 1..5 or 1,3,7");
  compare->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::Range(1u, 256u));
  compare->add_option("--out", out, "Output directory (default $AIRPATH_OUT_ROOT/compare-<config>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*identify) return cmd_identify(plant_path, out, mesh_text);
    if (*run) return cmd_run(config_path, out);
    if (*compare) return cmd_compare(config_path, modes_text, seeds_text, jobs, out);
  } catch (const airpath::ConfigError& e) {
    std::fprintf(stderr, "airpath: configuration error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "airpath: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
