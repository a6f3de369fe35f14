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

#include "airpath/identification.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace airpath {

Equilibrium node_equilibrium(const PlantParams& plant, const OperatingPoint& rho) {
  Equilibrium eq;
  eq.u_ss = calibration_inputs(plant, rho);
  eq.x_ss = plant_steady_state(plant, rho, eq.u_ss).vec();
  eq.w_inj_ss = rho.fuel_rate;
  return eq;
}

IoRecord perturbation_experiment(const PlantParams& plant, const OperatingPoint& rho,
                                 const PerturbationSpec& spec, std::uint64_t stream) {
  const Equilibrium eq = node_equilibrium(plant, rho);
  const auto samples = static_cast<std::size_t>(std::llround(spec.duration / spec.sample_period));
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + stream);
  auto coin = [&rng]() { return (rng() >> 63) != 0 ? 1.0 : -1.0; };

  // Keep the perturbed inputs inside [0, 100] near the actuator limits.
  Vec2 amp = Vec2::Constant(spec.actuator_amplitude);
  for (int i = 0; i < 2; ++i) amp(i) = std::min({amp(i), eq.u_ss(i), 100.0 - eq.u_ss(i)});
  const double fuel_amp = spec.fuel_amplitude * rho.fuel_rate;

  IoRecord rec;
  rec.x.reserve(samples);
  rec.u.reserve(samples);
  rec.w_inj.reserve(samples);
  PlantState state = PlantState::from(eq.x_ss);
  Vec2 sign{coin(), coin()};
  double fuel_sign = coin();
  const int hold = std::max(1, spec.hold_samples);
  for (std::size_t k = 0; k < samples; ++k) {
    if (k % static_cast<std::size_t>(hold) == 0) {
      if (coin() > 0) sign(0) = -sign(0);
      if (coin() > 0) sign(1) = -sign(1);
      if (coin() > 0) fuel_sign = -fuel_sign;
    }
    const Vec2 u = eq.u_ss + amp.cwiseProduct(sign);
    const double w = rho.fuel_rate + fuel_amp * fuel_sign;
    rec.x.push_back(state.vec());
    rec.u.push_back(u);
    rec.w_inj.push_back(w);
    state = plant_step(plant, state, {rho.engine_speed, w}, u, spec.sample_period);
  }
  return rec;
}

ModelGrid build_grid(const PlantParams& plant, const Mesh& mesh, const PerturbationSpec& spec,
                     std::vector<FitReport>* reports) {
  std::vector<LocalModel> nodes;
  nodes.reserve(mesh.size());
  if (reports) reports->clear();
  for (std::size_t i = 0; i < mesh.speed().size(); ++i) {
    for (std::size_t j = 0; j < mesh.fuel().size(); ++j) {
      const OperatingPoint rho = mesh.node(i, j);
      try {
        const IoRecord data = perturbation_experiment(plant, rho, spec, mesh.index(i, j));
        FitReport fit = fit_local_model(data, node_equilibrium(plant, rho));
        nodes.push_back(fit.model);
        if (reports) reports->push_back(std::move(fit));
      } catch (const Error& e) {
        std::ostringstream os;
        os << "node (" << i << ", " << j << ") at " << rho.engine_speed << " rpm, "
           << rho.fuel_rate << " mg/st: " << e.what();
        throw IdentificationError(os.str());
      }
    }
  }
  return ModelGrid(mesh, std::move(nodes));
}

}  // namespace airpath
