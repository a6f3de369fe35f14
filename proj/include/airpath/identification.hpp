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
#include <vector>

#include "airpath/lpv_model.hpp"
#include "airpath/plant.hpp"

namespace airpath {

/// Perturbation experiment run at each grid node: pseudo-random binary
/// sequences on both actuators and on the fuel rate about the node equilibrium.
struct PerturbationSpec {
  double actuator_amplitude = 2.0;  // percentage points
  double fuel_amplitude = 0.02;     // fraction of the node fuel rate
  double duration = 20.0;           // s
  double sample_period = 0.02;      // s
  int hold_samples = 5;             // minimum samples between switching decisions
  std::uint64_t seed = 1;
};

/// Equilibrium of the surrogate at rho under the calibration schedule.
Equilibrium node_equilibrium(const PlantParams& plant, const OperatingPoint& rho);

/// Simulates the perturbation experiment about the equilibrium at rho.
IoRecord perturbation_experiment(const PlantParams& plant, const OperatingPoint& rho,
                                 const PerturbationSpec& spec, std::uint64_t stream);

/// Identifies one LocalModel per mesh node. Identification failures are
/// rethrown with the node coordinates attached. When `reports` is given it
/// receives one FitReport per node in mesh order.
ModelGrid build_grid(const PlantParams& plant, const Mesh& mesh, const PerturbationSpec& spec,
                     std::vector<FitReport>* reports = nullptr);

}  // namespace airpath
