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

#include "airpath/common.hpp"
#include "airpath/lpv_model.hpp"

namespace airpath {

/// Affine actuator schedule  u = base + per_speed * n + per_fuel * f  in normalized (n, f).
struct ActuatorSchedule {
  Vec2 base{55.0, 60.0};
  Vec2 per_speed{0.0, -25.0};
  Vec2 per_fuel{-30.0, 10.0};
};

/// Synthetic two-state airpath surrogate (intake pressure, EGR rate).
struct PlantParams {
  double p_amb = 1.0;    // bar
  double c_c = 0.05;     // kg/s
  double c_e = 0.08;     // kg/s
  double k_b = 1.5;      // bar
  double tau_p0 = 0.12;  // s
  double tau_p1 = 0.5;   // s, scaled by (1 - n)
  double tau_chi0 = 0.06;
  double tau_chi1 = 0.2;
  double kappa = 0.1;  // 1/(bar s)
  double max_substep = 0.005;

  // Normalization n = (N_e - speed_lo)/(speed_hi - speed_lo), f likewise.
  // These ranges are also the admissible envelope.
  double speed_lo = 0.0, speed_hi = 2400.0;
  double fuel_lo = 0.0, fuel_hi = 110.0;

  // Multipliers for plant/model mismatch studies.
  double c_c_scale = 1.0;
  double c_e_scale = 1.0;
  double k_b_scale = 1.0;

  /// Steady actuator positions used to calibrate set-points and the
  /// feedforward table.
  ActuatorSchedule calibration;

  /// Throws ConfigError when a parameter is out of range or the steady maps
  /// fail the monotonicity lattice check.
  void validate() const;
};

struct PlantState {
  double p_im = 1.0;
  double chi_egr = 0.0;

  Vec2 vec() const { return {p_im, chi_egr}; }
  static PlantState from(const Vec2& x) { return {x(0), x(1)}; }
};

/// chi_egr = w_egr / (w_egr + w_c). Throws DomainError when both flows vanish.
double egr_rate(double w_egr, double w_c);

/// Normalized (n, f) for an operating point; throws DomainError outside the envelope.
Vec2 normalized_operating_point(const PlantParams& params, const OperatingPoint& rho);

PlantState plant_steady_state(const PlantParams& params, const OperatingPoint& rho, const Vec2& u);

/// Time constants (tau_p, tau_chi) at an operating point.
Vec2 plant_time_constants(const PlantParams& params, const OperatingPoint& rho);

/// Integrates the surrogate over dt with fixed-step RK4 (substep <= max_substep),
/// holding rho and u constant, and clamps the result to the admissible set.
PlantState plant_step(const PlantParams& params, const PlantState& state,
                      const OperatingPoint& rho, const Vec2& u, double dt);

/// Actuator positions of the calibration schedule at rho, clipped to [0, 100].
Vec2 calibration_inputs(const PlantParams& params, const OperatingPoint& rho);

}  // namespace airpath
