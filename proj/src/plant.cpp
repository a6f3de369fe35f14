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

#include "airpath/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace airpath {

namespace {

constexpr double kEnvelopeSlack = 1e-9;

struct Derivatives {
  double p_ss;
  double chi_ss;
  double tau_p;
  double tau_chi;
};

Derivatives steady_terms(const PlantParams& params, const OperatingPoint& rho, const Vec2& u) {
  const PlantState ss = plant_steady_state(params, rho, u);
  const Vec2 tau = plant_time_constants(params, rho);
  return {ss.p_im, ss.chi_egr, tau(0), tau(1)};
}

PlantState clamp_state(const PlantParams& params, PlantState s) {
  s.p_im = std::max(s.p_im, 0.5 * params.p_amb);
  s.chi_egr = std::clamp(s.chi_egr, 0.0, std::nextafter(1.0, 0.0));
  return s;
}

}  // namespace

double egr_rate(double w_egr, double w_c) {
  if (w_egr < 0.0 || w_c < 0.0) throw DomainError("egr_rate: negative mass flow");
  const double total = w_egr + w_c;
  if (!(total > 0.0)) throw DomainError("egr_rate: degenerate flow (both flows zero)");
  return w_egr / total;
}

Vec2 normalized_operating_point(const PlantParams& params, const OperatingPoint& rho) {
  const double n = (rho.engine_speed - params.speed_lo) / (params.speed_hi - params.speed_lo);
  const double f = (rho.fuel_rate - params.fuel_lo) / (params.fuel_hi - params.fuel_lo);
  if (!(n >= -kEnvelopeSlack && n <= 1.0 + kEnvelopeSlack && f >= -kEnvelopeSlack &&
        f <= 1.0 + kEnvelopeSlack)) {
    std::ostringstream os;
    os << "operating point (" << rho.engine_speed << " rpm, " << rho.fuel_rate
       << " mg/st) outside the plant envelope";
    throw DomainError(os.str());
  }
  return {std::clamp(n, 0.0, 1.0), std::clamp(f, 0.0, 1.0)};
}

PlantState plant_steady_state(const PlantParams& params, const OperatingPoint& rho, const Vec2& u) {
  if (!(u(0) >= 0.0 && u(0) <= 100.0 && u(1) >= 0.0 && u(1) <= 100.0)) {
    throw DomainError("plant_steady_state: actuator command outside [0, 100]");
  }
  const Vec2 nf = normalized_operating_point(params, rho);
  const double n = nf(0);
  const double f = nf(1);
  const double g = u(0) / 100.0;
  const double v = u(1) / 100.0;
  const double k_b = params.k_b * params.k_b_scale;
  const double c_c = params.c_c * params.c_c_scale;
  const double c_e = params.c_e * params.c_e_scale;

  const double p_ss =
      params.p_amb * (1.0 + k_b * n * f * (0.2 + 0.8 * std::pow(v, 1.3)) * (1.0 - 0.25 * g));
  const double speed_flow = 0.3 + 0.7 * n;
  const double w_c = c_c * speed_flow * (p_ss / params.p_amb);
  const double w_egr = c_e * g * speed_flow * std::max(0.1, 1.5 - p_ss / (2.0 * params.p_amb));
  return {p_ss, egr_rate(w_egr, w_c)};
}

Vec2 plant_time_constants(const PlantParams& params, const OperatingPoint& rho) {
  const double n = normalized_operating_point(params, rho)(0);
  return {params.tau_p0 + params.tau_p1 * (1.0 - n), params.tau_chi0 + params.tau_chi1 * (1.0 - n)};
}

PlantState plant_step(const PlantParams& params, const PlantState& state,
                      const OperatingPoint& rho, const Vec2& u, double dt) {
  if (!(dt > 0.0)) throw DomainError("plant_step: dt must be positive");
  const Derivatives d = steady_terms(params, rho, u);
  const double kappa = params.kappa;
  auto rhs = [&](const Vec2& x) -> Vec2 {
    return {(d.p_ss - x(0)) / d.tau_p, (d.chi_ss - x(1)) / d.tau_chi + kappa * (d.p_ss - x(0))};
  };
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt / params.max_substep - 1e-12)));
  const double h = dt / substeps;
  Vec2 x = state.vec();
  for (int i = 0; i < substeps; ++i) {
    const Vec2 k1 = rhs(x);
    const Vec2 k2 = rhs(x + 0.5 * h * k1);
    const Vec2 k3 = rhs(x + 0.5 * h * k2);
    const Vec2 k4 = rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return clamp_state(params, PlantState::from(x));
}

Vec2 calibration_inputs(const PlantParams& params, const OperatingPoint& rho) {
  const Vec2 nf = normalized_operating_point(params, rho);
  const ActuatorSchedule& s = params.calibration;
  Vec2 u = s.base + s.per_speed * nf(0) + s.per_fuel * nf(1);
  return u.cwiseMax(0.0).cwiseMin(100.0);
}

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("plant: ") + name + " must be positive");
  };
  positive(p_amb, "p_amb");
  positive(c_c * c_c_scale, "c_c");
  positive(c_e * c_e_scale, "c_e");
  positive(k_b * k_b_scale, "k_b");
  positive(tau_p0, "tau_p0");
  positive(tau_chi0, "tau_chi0");
  positive(max_substep, "max_substep");
  if (tau_p1 < 0.0 || tau_chi1 < 0.0 || kappa < 0.0) {
    throw ConfigError("plant: tau_p1, tau_chi1 and kappa must be non-negative");
  }
  if (!(speed_hi > speed_lo) || !(fuel_hi > fuel_lo)) {
    throw ConfigError("plant: normalization ranges must be increasing");
  }

  // Monotone steady gains on a lattice of the envelope.
  constexpr int kLattice = 11;
  for (int a = 0; a < kLattice; ++a) {
    for (int b = 0; b < kLattice; ++b) {
      const OperatingPoint rho{speed_lo + (speed_hi - speed_lo) * a / (kLattice - 1.0),
                               fuel_lo + (fuel_hi - fuel_lo) * b / (kLattice - 1.0)};
      for (int c = 0; c < kLattice; ++c) {
        const double fixed = 100.0 * c / (kLattice - 1.0);
        double prev_p = -1.0;
        double prev_chi = -1.0;
        for (int s = 0; s < kLattice; ++s) {
          const double moving = 100.0 * s / (kLattice - 1.0);
          const double p = plant_steady_state(*this, rho, {fixed, moving}).p_im;
          const double chi = plant_steady_state(*this, rho, {moving, fixed}).chi_egr;
          if (p < prev_p || chi < prev_chi) {
            throw ConfigError("plant: steady-state maps are not monotone in the actuators");
          }
          prev_p = p;
          prev_chi = chi;
        }
      }
    }
  }
}

}  // namespace airpath
