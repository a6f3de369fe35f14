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

#include "airpath/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace airpath {

SetpointMap::SetpointMap(Mesh mesh, std::vector<Vec2> targets)
    : mesh_(std::move(mesh)), targets_(std::move(targets)) {
  if (targets_.size() != mesh_.size()) throw ConfigError("set-point map: node count mismatch");
}

SetpointMap SetpointMap::from_grid(const ModelGrid& grid) {
  std::vector<Vec2> targets;
  targets.reserve(grid.nodes().size());
  for (const LocalModel& m : grid.nodes()) targets.push_back(m.x_ss);
  return SetpointMap(grid.mesh(), std::move(targets));
}

Vec2 SetpointMap::at(const OperatingPoint& rho) const {
  const GridCell c = mesh_.locate(rho);
  return c.blend<Vec2>(targets_[mesh_.index(c.i0, c.j0)], targets_[mesh_.index(c.i0, c.j1)],
                       targets_[mesh_.index(c.i1, c.j0)], targets_[mesh_.index(c.i1, c.j1)]);
}

void SetpointMap::check_bounds(const Vec2& x_min, const Vec2& x_max) const {
  for (std::size_t k = 0; k < targets_.size(); ++k) {
    if ((targets_[k].array() < x_min.array()).any() || (targets_[k].array() > x_max.array()).any()) {
      std::ostringstream os;
      os << "set-point map: node " << k << " target outside the state bounds";
      throw ConfigError(os.str());
    }
  }
}

void Scenario::validate() const {
  if (rho.empty()) throw ConfigError("scenario '" + label + "' is empty");
  if (!(sample_period > 0.0)) throw ConfigError("scenario sample period must be positive");
  if (!targets.empty() && targets.size() != rho.size()) {
    throw ConfigError("scenario '" + label + "': target and operating-point lengths differ");
  }
}

ScenarioKind parse_scenario_kind(const std::string& token) {
  if (token == "fuel_step") return ScenarioKind::kFuelStep;
  if (token == "speed_ramp") return ScenarioKind::kSpeedRamp;
  if (token == "target_override") return ScenarioKind::kTargetOverride;
  if (token == "synthetic_cycle") return ScenarioKind::kSyntheticCycle;
  throw ConfigError("unknown scenario kind '" + token + "'");
}

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kFuelStep:
      return "fuel_step";
    case ScenarioKind::kSpeedRamp:
      return "speed_ramp";
    case ScenarioKind::kTargetOverride:
      return "target_override";
    case ScenarioKind::kSyntheticCycle:
      return "synthetic_cycle";
  }
  return "unknown";
}

namespace {

void check_envelope(const ScenarioParams& p, double speed, double fuel) {
  if (speed < p.speed_min || speed > p.speed_max || fuel < p.fuel_min || fuel > p.fuel_max) {
    std::ostringstream os;
    os << "scenario operating point (" << speed << " rpm, " << fuel << " mg/st) outside the envelope";
    throw DomainError(os.str());
  }
}

std::size_t sample_count(double duration, double dt) {
  if (!(duration > 0.0) || !(dt > 0.0)) throw DomainError("scenario duration and sample period must be positive");
  return static_cast<std::size_t>(std::llround(duration / dt));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Scenario fuel_step(const ScenarioParams& p) {
  check_envelope(p, p.speed, p.fuel_low);
  check_envelope(p, p.speed, p.fuel_high);
  Scenario s;
  s.label = "fuel_step";
  s.sample_period = p.sample_period;
  const std::size_t n = sample_count(p.duration, p.sample_period);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * p.sample_period;
    const bool up = t >= p.step_time && (p.step_back_time < 0.0 || t < p.step_back_time);
    s.rho.push_back({p.speed, up ? p.fuel_high : p.fuel_low});
  }
  return s;
}

Scenario speed_ramp(const ScenarioParams& p) {
  check_envelope(p, p.speed_low, p.ramp_fuel);
  check_envelope(p, p.speed_high, p.ramp_fuel);
  Scenario s;
  s.label = "speed_ramp";
  s.sample_period = p.sample_period;
  const std::size_t n = sample_count(p.duration, p.sample_period);
  const double t1 = p.ramp_start;
  const double t2 = t1 + p.ramp_duration;
  const double t3 = t2 + p.ramp_hold;
  const double t4 = t3 + p.ramp_duration;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * p.sample_period;
    double frac = 0.0;
    if (t >= t1 && t < t2) frac = (t - t1) / p.ramp_duration;
    else if (t >= t2 && t < t3) frac = 1.0;
    else if (t >= t3 && t < t4) frac = 1.0 - (t - t3) / p.ramp_duration;
    s.rho.push_back({p.speed_low + frac * (p.speed_high - p.speed_low), p.ramp_fuel});
  }
  return s;
}

Scenario synthetic_cycle(const ScenarioParams& p, std::uint64_t seed) {
  Scenario s;
  s.label = "synthetic_cycle";
  s.sample_period = p.sample_period;
  const std::size_t n = sample_count(p.cycle_duration, p.sample_period);
  std::mt19937_64 rng(seed);
  const double idle_speed_hi = p.speed_min + 0.2 * (p.speed_max - p.speed_min);
  const double idle_fuel_hi = p.fuel_min + 0.15 * (p.fuel_max - p.fuel_min);

  OperatingPoint from{p.speed_min + 0.05 * (p.speed_max - p.speed_min), p.fuel_min + 0.05 * (p.fuel_max - p.fuel_min)};
  double t = 0.0;
  const double dt = p.sample_period;
  while (s.rho.size() < n) {
    OperatingPoint to;
    if (uniform(rng, 0.0, 1.0) < p.idle_probability) {
      to = {uniform(rng, p.speed_min, idle_speed_hi), uniform(rng, p.fuel_min, idle_fuel_hi)};
    } else {
      to = {uniform(rng, p.speed_min, p.speed_max), uniform(rng, p.fuel_min, p.fuel_max)};
    }
    const double ramp = uniform(rng, 0.2, 5.0);
    const double dwell = uniform(rng, 1.0, 8.0);
    const double t_ramp_end = t + ramp;
    const double t_end = t_ramp_end + dwell;
    while (s.rho.size() < n) {
      const double tk = static_cast<double>(s.rho.size()) * dt;
      if (tk >= t_end) break;
      const double frac = tk >= t_ramp_end ? 1.0 : std::max(0.0, (tk - t) / ramp);
      s.rho.push_back({from.engine_speed + frac * (to.engine_speed - from.engine_speed),
                       from.fuel_rate + frac * (to.fuel_rate - from.fuel_rate)});
    }
    from = to;
    t = t_end;
  }
  for (const OperatingPoint& rho : s.rho) check_envelope(p, rho.engine_speed, rho.fuel_rate);
  return s;
}

}  // namespace

Scenario make_scenario(ScenarioKind kind, const ScenarioParams& params, std::uint64_t seed,
                       const SetpointMap* map) {
  switch (kind) {
    case ScenarioKind::kFuelStep:
      return fuel_step(params);
    case ScenarioKind::kSpeedRamp:
      return speed_ramp(params);
    case ScenarioKind::kTargetOverride: {
      if (!map) throw ConfigError("target_override scenario needs a set-point map");
      Scenario s = fuel_step(params);
      s.label = "target_override";
      const Vec2 held = map->at(s.rho.front()) + params.target_offset;
      s.targets.assign(s.rho.size(), held);
      return s;
    }
    case ScenarioKind::kSyntheticCycle:
      return synthetic_cycle(params, seed);
  }
  throw ConfigError("unknown scenario kind");
}

Scenario concatenate(const Scenario& a, const Scenario& b) {
  if (a.sample_period != b.sample_period) throw ConfigError("concatenate: sample periods differ");
  if (a.targets.empty() != b.targets.empty()) throw ConfigError("concatenate: mixed target sources");
  Scenario out = a;
  out.label = a.label + "+" + b.label;
  out.rho.insert(out.rho.end(), b.rho.begin(), b.rho.end());
  out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
  return out;
}

SimTrace run_closed_loop(const SimConfig& config, const ModelGrid& grid, const SetpointMap& setpoints,
                         const Scenario& scenario, std::uint64_t seed,
                         const std::vector<PenaltyGrid>* penalties) {
  scenario.validate();
  FbMpcConfig fb_config = config.fb;
  fb_config.sample_period = scenario.sample_period;
  FbMpc fb = penalties ? FbMpc(fb_config, grid, *penalties) : FbMpc(fb_config, grid);
  FfMpc ff_mpc(config.ff, grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double dt = scenario.sample_period;
  const OperatingPoint rho0 = scenario.rho.front();
  Vec2 u_prev = lut_ff(grid, rho0);
  PlantState plant = plant_steady_state(config.plant, rho0, u_prev);
  Vec2 x_meas_prev = plant.vec();
  double chi_filtered = plant.chi_egr;
  Vec2 ff_prev = Vec2::Zero();
  bool first = true;

  SimTrace trace;
  trace.label = scenario.label;
  trace.sample_period = dt;
  trace.rows.reserve(scenario.size());
  for (std::size_t k = 0; k < scenario.size(); ++k) {
    TraceRow row;
    row.t = static_cast<double>(k) * dt;
    row.rho = scenario.rho[k];
    row.r = scenario.targets.empty() ? setpoints.at(row.rho) : scenario.targets[k];
    row.x = plant.vec();

    Vec2 x_meas = plant.vec();
    if (config.egr_measurement_lag > 0.0) {
      chi_filtered += dt / (config.egr_measurement_lag + dt) * (plant.chi_egr - chi_filtered);
      x_meas(1) = chi_filtered;
    }
    if (config.measurement_noise.any()) {
      x_meas(0) += config.measurement_noise(0) * gauss(rng);
      x_meas(1) += config.measurement_noise(1) * gauss(rng);
    }
    if (first) x_meas_prev = x_meas;

    Vec2 ff_now = Vec2::Zero();
    try {
      switch (config.ff_mode) {
        case FfMode::kNone:
          break;
        case FfMode::kLookupTable:
          ff_now = lut_ff(grid, row.rho);
          row.ff_status = "lut";
          break;
        case FfMode::kMpc: {
          const FfMpcResult res = ff_mpc.step(row.rho, row.r);
          ff_now = res.u_ff;
          row.ff_status = res.fallback ? "infeasible_fallback" : to_string(res.status);
          row.ff_iterations = res.iterations;
          row.ff_kkt = res.kkt_residual;
          break;
        }
      }
    } catch (const Error&) {
      ff_now = lut_ff(grid, row.rho);
      row.ff_status = "error_fallback";
    }
    if (first) ff_prev = ff_now;
    const Vec2 delta_ff = ff_now - ff_prev;
    const Vec2 u_bar = compose(u_prev, ff_prev, ff_now);

    Vec2 u = u_bar.cwiseMax(config.fb.u_min).cwiseMin(config.fb.u_max);
    try {
      const FbStepResult res = fb.step(x_meas, x_meas_prev, u_bar, row.r, row.rho, delta_ff);
      u = res.u;
      row.du_fb = res.delta_u;
      row.eps = res.diagnostics.slack;
      row.fb_status = res.diagnostics.status;
      row.fb_iterations = res.diagnostics.iterations;
      row.fb_kkt = res.diagnostics.kkt_residual;
    } catch (const Error&) {
      row.fb_status = QpStatus::kInfeasible;
    }
    row.u = u;
    row.u_ff = ff_now;
    trace.rows.push_back(row);

    if (config.ff_mode == FfMode::kMpc) {
      ff_mpc.advance(row.rho, config.ff.model_input == FfModelInput::kApplied ? u : ff_now);
    }
    plant = plant_step(config.plant, plant, row.rho, u, dt);
    u_prev = u;
    ff_prev = ff_now;
    x_meas_prev = x_meas;
    first = false;
  }
  return trace;
}

namespace {

SignalMetrics signal_metrics(const SimTrace& trace, int c, double min_plateau,
                             std::size_t* events) {
  const auto& rows = trace.rows;
  SignalMetrics m;
  double sum = 0.0;
  for (const TraceRow& row : rows) {
    const double e = std::abs(row.x(c) - row.r(c));
    sum += e;
    m.peak_abs_error = std::max(m.peak_abs_error, e);
  }
  m.mean_abs_error = sum / static_cast<double>(rows.size());

  // Plateaus: maximal runs of identical targets held at least min_plateau.
  struct Plateau {
    std::size_t begin, end;  // [begin, end)
    double value;
  };
  std::vector<Plateau> plateaus;
  const auto min_len = static_cast<std::size_t>(std::max(1.0, std::ceil(min_plateau / trace.sample_period - 1e-9)));
  std::size_t start = 0;
  for (std::size_t k = 1; k <= rows.size(); ++k) {
    if (k == rows.size() || rows[k].r(c) != rows[start].r(c)) {
      if (k - start >= min_len) plateaus.push_back({start, k, rows[start].r(c)});
      start = k;
    }
  }
  const double dt = trace.sample_period;
  for (std::size_t p = 1; p < plateaus.size(); ++p) {
    const double step = plateaus[p].value - plateaus[p - 1].value;
    if (std::abs(step) <= 1e-12) continue;
    if (events) ++*events;
    const std::size_t t0 = plateaus[p - 1].end;
    const std::size_t t1 = plateaus[p].end;
    const double sign = step > 0 ? 1.0 : -1.0;
    double over = 0.0;
    for (std::size_t k = plateaus[p].begin; k < t1; ++k) {
      over = std::max(over, sign * (rows[k].x(c) - plateaus[p].value));
    }
    m.overshoot_pct = std::max(m.overshoot_pct, 100.0 * over / std::abs(step));
    std::size_t last_out = t0;
    bool any_out = false;
    for (std::size_t k = t0; k < t1; ++k) {
      if (std::abs(rows[k].x(c) - plateaus[p].value) > 0.02 * std::abs(step)) {
        last_out = k;
        any_out = true;
      }
    }
    const double settle = any_out ? static_cast<double>(last_out + 1 - t0) * dt : 0.0;
    m.settling_time = std::max(m.settling_time, settle);
  }
  return m;
}

}  // namespace

Metrics compute_metrics(const SimTrace& trace, double min_plateau) {
  if (trace.rows.empty()) throw DomainError("compute_metrics: empty trace");
  Metrics out;
  std::size_t events = 0;
  out.p_im = signal_metrics(trace, 0, min_plateau, &events);
  out.chi_egr = signal_metrics(trace, 1, min_plateau, &events);
  out.step_events = events;
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  os << kTraceHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    os << fmt(r.t) << ',' << fmt(r.x(0)) << ',' << fmt(r.x(1)) << ',' << fmt(r.r(0)) << ','
       << fmt(r.r(1)) << ',' << fmt(r.u(0)) << ',' << fmt(r.u(1)) << ',' << fmt(r.u_ff(0)) << ','
       << fmt(r.u_ff(1)) << ',' << fmt(r.du_fb(0)) << ',' << fmt(r.du_fb(1)) << ',' << fmt(r.eps(0))
       << ',' << fmt(r.eps(1)) << ',' << to_string(r.fb_status) << ',' << r.fb_iterations << ','
       << fmt(r.fb_kkt) << ',' << r.ff_status << '\n';
  }
}

void write_scenario_csv(std::ostream& os, const Scenario& s) {
  const bool with_targets = !s.targets.empty();
  os << (with_targets ? "t,Ne,winj,r_pim,r_egr" : "t,Ne,winj") << '\n';
  for (std::size_t k = 0; k < s.size(); ++k) {
    os << fmt(static_cast<double>(k) * s.sample_period) << ',' << fmt(s.rho[k].engine_speed) << ','
       << fmt(s.rho[k].fuel_rate);
    if (with_targets) os << ',' << fmt(s.targets[k](0)) << ',' << fmt(s.targets[k](1));
    os << '\n';
  }
}

Scenario read_scenario_csv(std::istream& is, const std::string& label) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("scenario csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_targets = false;
  if (line == "t,Ne,winj,r_pim,r_egr") with_targets = true;
  else if (line != "t,Ne,winj") throw ConfigError("scenario csv: unexpected header '" + line + "'");

  Scenario s;
  s.label = label;
  std::vector<double> times;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("scenario csv: bad number on line " + std::to_string(lineno));
      }
    }
    if (v.size() != (with_targets ? 5u : 3u)) {
      throw ConfigError("scenario csv: wrong column count on line " + std::to_string(lineno));
    }
    times.push_back(v[0]);
    s.rho.push_back({v[1], v[2]});
    if (with_targets) s.targets.push_back({v[3], v[4]});
  }
  if (times.size() < 2) throw ConfigError("scenario csv: need at least two samples");
  s.sample_period = times[1] - times[0];
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs((times[k] - times[k - 1]) - s.sample_period) > 1e-9) {
      throw ConfigError("scenario csv: non-uniform sample spacing at line " + std::to_string(k + 2));
    }
  }
  s.validate();
  return s;
}

}  // namespace airpath
