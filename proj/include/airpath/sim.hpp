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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "airpath/fb_mpc.hpp"
#include "airpath/feedforward.hpp"
#include "airpath/lpv_model.hpp"
#include "airpath/plant.hpp"

namespace airpath {

/// Interpolating set-point table over the model mesh.
class SetpointMap {
 public:
  SetpointMap() = default;
  SetpointMap(Mesh mesh, std::vector<Vec2> targets);

  /// Targets equal to the grid equilibria x_ss at every node.
  static SetpointMap from_grid(const ModelGrid& grid);

  const Mesh& mesh() const { return mesh_; }
  const std::vector<Vec2>& targets() const { return targets_; }
  Vec2 at(const OperatingPoint& rho) const;
  /// Throws ConfigError when a node target lies outside [x_min, x_max].
  void check_bounds(const Vec2& x_min, const Vec2& x_max) const;

 private:
  Mesh mesh_;
  std::vector<Vec2> targets_;
};

/// Sample-indexed operating-point profile with optional explicit targets
/// (otherwise the set-point map is used).
struct Scenario {
  std::string label;
  double sample_period = 0.02;
  std::vector<OperatingPoint> rho;
  std::vector<Vec2> targets;  // empty or same length as rho

  std::size_t size() const { return rho.size(); }
  double duration() const { return static_cast<double>(rho.size()) * sample_period; }
  void validate() const;
};

enum class ScenarioKind { kFuelStep, kSpeedRamp, kTargetOverride, kSyntheticCycle };

ScenarioKind parse_scenario_kind(const std::string& token);
const char* to_string(ScenarioKind kind);

struct ScenarioParams {
  double sample_period = 0.02;
  double duration = 12.0;  // fuel_step, speed_ramp, target_override

  // Envelope all generated operating points must respect.
  double speed_min = 600.0, speed_max = 2400.0;
  double fuel_min = 5.0, fuel_max = 105.0;

  // fuel_step / target_override: tip-in at step_time, tip-out at step_back_time (< 0: none).
  double speed = 1500.0;
  double fuel_low = 20.0;
  double fuel_high = 50.0;
  double step_time = 2.0;
  double step_back_time = 7.0;

  // speed_ramp: low -> high -> low at constant fuel.
  double ramp_fuel = 30.0;
  double speed_low = 1000.0;
  double speed_high = 2000.0;
  double ramp_start = 2.0;
  double ramp_duration = 2.0;
  double ramp_hold = 3.0;

  // target_override: targets held at map(rho_0) + offset for the whole run.
  Vec2 target_offset = Vec2::Zero();

  // synthetic_cycle
  double cycle_duration = 600.0;
  double idle_probability = 0.25;
};

/// Generates a scenario; `map` is required for target_override. Throws
/// DomainError when parameters leave the envelope.
Scenario make_scenario(ScenarioKind kind, const ScenarioParams& params, std::uint64_t seed,
                       const SetpointMap* map = nullptr);

/// Appends b to a (sample periods must agree).
Scenario concatenate(const Scenario& a, const Scenario& b);

struct SimConfig {
  PlantParams plant;
  FbMpcConfig fb;
  FfMpcConfig ff;
  FfMode ff_mode = FfMode::kNone;
  /// First-order lag on the EGR-rate measurement (0 disables).
  double egr_measurement_lag = 0.0;
  /// Standard deviation of additive measurement noise on (p_im, chi_egr).
  Vec2 measurement_noise = Vec2::Zero();
};

struct TraceRow {
  double t = 0.0;
  Vec2 x = Vec2::Zero();  // plant state
  Vec2 r = Vec2::Zero();
  Vec2 u = Vec2::Zero();
  Vec2 u_ff = Vec2::Zero();
  Vec2 du_fb = Vec2::Zero();
  OperatingPoint rho;
  Vec2 eps = Vec2::Zero();
  QpStatus fb_status = QpStatus::kOptimal;
  int fb_iterations = 0;
  double fb_kkt = 0.0;
  std::string ff_status = "none";
  int ff_iterations = 0;
  double ff_kkt = 0.0;
};

struct SimTrace {
  std::string label;
  double sample_period = 0.02;
  std::vector<TraceRow> rows;
};

/// Closed loop of surrogate plant, optional feedforward and rate-based feedback MPC.
/// Solver problems are recorded in the trace rather than raised.
SimTrace run_closed_loop(const SimConfig& config, const ModelGrid& grid, const SetpointMap& setpoints,
                         const Scenario& scenario, std::uint64_t seed,
                         const std::vector<PenaltyGrid>* penalties = nullptr);

struct SignalMetrics {
  double mean_abs_error = 0.0;
  double peak_abs_error = 0.0;
  double overshoot_pct = 0.0;  // worst event, percent of step size
  double settling_time = 0.0;  // worst event, 2% band, s
};

struct Metrics {
  SignalMetrics p_im;
  SignalMetrics chi_egr;
  std::size_t step_events = 0;
};

/// Mean absolute errors over all samples plus overshoot and settling time per
/// target step. A step event is a change between two target plateaus that are
/// each held for at least `min_plateau` seconds.
Metrics compute_metrics(const SimTrace& trace, double min_plateau = 0.5);

// CSV persistence.
inline constexpr const char* kTraceHeader =
    "t,pim,egr,r_pim,r_egr,u_egr,u_vgt,uff_egr,uff_vgt,dufb_egr,dufb_vgt,eps1,eps2,fb_status,fb_iters,fb_kkt,ff_status";
void write_trace_csv(std::ostream& os, const SimTrace& trace);
void write_scenario_csv(std::ostream& os, const Scenario& scenario);
/// Reads `t,Ne,winj[,r_pim,r_egr]`; the sample period is taken from the time column.
Scenario read_scenario_csv(std::istream& is, const std::string& label = "csv");

}  // namespace airpath
