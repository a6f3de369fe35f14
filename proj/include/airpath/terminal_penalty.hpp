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

#include <vector>

#include "airpath/common.hpp"
#include "airpath/lpv_model.hpp"
#include "airpath/riccati.hpp"

namespace airpath {

/// Terminal weight of the rate-based controller. `reduced` acts on (dx, e);
/// `embedded()` places it in the leading block of the 8x8 extended-state weight.
struct TerminalPenalty {
  Mat4 reduced = Mat4::Zero();

  Mat8 embedded() const {
    Mat8 P = Mat8::Zero();
    P.topLeftCorner<4, 4>() = reduced;
    return P;
  }
};

/// Stage weights of the rate-based controller.
struct TrackingWeights {
  Mat2 Q_e = Mat2::Identity();
  Mat2 R_ext = Mat2::Identity();

  bool operator==(const TrackingWeights&) const = default;
};

/// Dynamics of (dx, e) alone: [[A, 0], [A, I]] and [[B], [B]].
Mat4 rate_error_dynamics(const Mat2& A);
Eigen::Matrix<double, 4, 2> rate_error_input(const Mat2& B);

/// DARE-based terminal penalty for one local model.
TerminalPenalty fb_terminal_penalty(const LocalModel& m, const TrackingWeights& w,
                                    const DareSettings& settings = {});

/// Terminal penalties on the model mesh for one weight pair.
class PenaltyGrid {
 public:
  PenaltyGrid() = default;
  PenaltyGrid(Mesh mesh, TrackingWeights weights, std::vector<TerminalPenalty> nodes);

  const Mesh& mesh() const { return mesh_; }
  const TrackingWeights& weights() const { return weights_; }
  const std::vector<TerminalPenalty>& nodes() const { return nodes_; }

 private:
  Mesh mesh_;
  TrackingWeights weights_;
  std::vector<TerminalPenalty> nodes_;
};

PenaltyGrid build_penalty_grid(const ModelGrid& grid, const TrackingWeights& w,
                               const DareSettings& settings = {});

/// Element-wise bilinear interpolation of the node penalties, followed by
/// symmetrization and clipping of negative eigenvalues. Node values are
/// returned verbatim.
TerminalPenalty interpolate_penalty(const PenaltyGrid& grid, const OperatingPoint& rho);

}  // namespace airpath
