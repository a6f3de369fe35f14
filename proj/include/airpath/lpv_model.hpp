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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "airpath/common.hpp"

namespace airpath {

/// Engine operating point: speed [rpm] and fuel injection rate [mg/stroke].
struct OperatingPoint {
  double engine_speed = 0.0;
  double fuel_rate = 0.0;
};

/// One node of the LPV prediction model, in deviation form about (x_ss, u_ss, w_inj_ss):
///   x+ = x_ss + A (x - x_ss) + B (u - u_ss) + Bf (w_inj - w_inj_ss)
/// States are (p_im [bar], chi_egr [-]); inputs are (EGR valve % open, VGT % closed).
struct LocalModel {
  Mat2 A = Mat2::Zero();
  Mat2 B = Mat2::Zero();
  Vec2 Bf = Vec2::Zero();
  Vec2 x_ss = Vec2::Zero();
  Vec2 u_ss = Vec2::Zero();
  double w_inj_ss = 0.0;
};

double spectral_radius(const Mat2& A);

/// Location of a clamped operating point inside a rectilinear mesh: the lower
/// corner indices and the fractional offsets toward the upper corner.
struct GridCell {
  std::size_t i0 = 0, i1 = 0;
  std::size_t j0 = 0, j1 = 0;
  double a = 0.0;  // along speed
  double b = 0.0;  // along fuel

  template <typename T>
  T blend(const T& n00, const T& n01, const T& n10, const T& n11) const {
    return (1.0 - a) * ((1.0 - b) * n00 + b * n01) + a * ((1.0 - b) * n10 + b * n11);
  }
};

/// Speed x fuel mesh. Breakpoints must be strictly increasing with at least two entries each.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<double> speed_breakpoints, std::vector<double> fuel_breakpoints);

  const std::vector<double>& speed() const { return speed_; }
  const std::vector<double>& fuel() const { return fuel_; }
  std::size_t size() const { return speed_.size() * fuel_.size(); }
  std::size_t index(std::size_t i, std::size_t j) const { return i * fuel_.size() + j; }
  OperatingPoint node(std::size_t i, std::size_t j) const { return {speed_[i], fuel_[j]}; }

  OperatingPoint clamp(const OperatingPoint& rho) const;
  GridCell locate(const OperatingPoint& rho) const;

  bool operator==(const Mesh& other) const = default;

 private:
  std::vector<double> speed_;
  std::vector<double> fuel_;
};

/// Gridded LPV model: one LocalModel per mesh node, stored row-major (speed-major).
class ModelGrid {
 public:
  ModelGrid() = default;
  ModelGrid(Mesh mesh, std::vector<LocalModel> nodes);

  const Mesh& mesh() const { return mesh_; }
  const std::vector<LocalModel>& nodes() const { return nodes_; }
  const LocalModel& node(std::size_t i, std::size_t j) const { return nodes_[mesh_.index(i, j)]; }

 private:
  Mesh mesh_;
  std::vector<LocalModel> nodes_;
};

/// Default mesh: 9 speeds over 600-2400 rpm and 11 fuel rates over 5-105 mg/stroke.
Mesh default_mesh();
Mesh uniform_mesh(double speed_lo, double speed_hi, std::size_t n_speed, double fuel_lo,
                  double fuel_hi, std::size_t n_fuel);

/// Bilinear interpolation of every entry of the four surrounding node models,
/// with rho saturated to the mesh hull.
LocalModel interpolate_model(const ModelGrid& grid, const OperatingPoint& rho);

Vec2 step_model(const LocalModel& m, const Vec2& x, const Vec2& u, double w_inj);

/// Input-output experiment sampled at the controller period.
struct IoRecord {
  std::vector<Vec2> x;
  std::vector<Vec2> u;
  std::vector<double> w_inj;
};

struct Equilibrium {
  Vec2 x_ss = Vec2::Zero();
  Vec2 u_ss = Vec2::Zero();
  double w_inj_ss = 0.0;
};

struct FitReport {
  LocalModel model;
  Vec2 residual_rms = Vec2::Zero();  // one-step prediction residual
  Vec2 signal_range = Vec2::Zero();  // max - min of the predicted signal
  double spectral_radius = 0.0;
};

/// Rejection threshold for the spectral radius of an identified A.
inline constexpr double kMaxIdentifiedSpectralRadius = 0.999;

/// Least-squares fit of (A, B, Bf) from one-step deviation regressions.
/// Throws IdentificationError on a rank-deficient regressor (naming the
/// unexcited direction) or an unstable fitted A.
FitReport fit_local_model(const IoRecord& data, const Equilibrium& equilibrium);

}  // namespace airpath
