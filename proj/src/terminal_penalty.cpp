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

#include "airpath/terminal_penalty.hpp"

#include <sstream>

#include <Eigen/Eigenvalues>

namespace airpath {

Mat4 rate_error_dynamics(const Mat2& A) {
  Mat4 F = Mat4::Zero();
  F.topLeftCorner<2, 2>() = A;
  F.bottomLeftCorner<2, 2>() = A;
  F.bottomRightCorner<2, 2>().setIdentity();
  return F;
}

Eigen::Matrix<double, 4, 2> rate_error_input(const Mat2& B) {
  Eigen::Matrix<double, 4, 2> G;
  G << B, B;
  return G;
}

TerminalPenalty fb_terminal_penalty(const LocalModel& m, const TrackingWeights& w,
                                    const DareSettings& settings) {
  Mat4 Q = Mat4::Zero();
  Q.bottomRightCorner<2, 2>() = w.Q_e;
  TerminalPenalty out;
  out.reduced = solve_dare<double, 4, 2>(rate_error_dynamics(m.A), rate_error_input(m.B), Q,
                                         w.R_ext, settings);
  return out;
}

PenaltyGrid::PenaltyGrid(Mesh mesh, TrackingWeights weights, std::vector<TerminalPenalty> nodes)
    : mesh_(std::move(mesh)), weights_(weights), nodes_(std::move(nodes)) {
  if (nodes_.size() != mesh_.size()) throw ConfigError("penalty grid: node count mismatch");
}

PenaltyGrid build_penalty_grid(const ModelGrid& grid, const TrackingWeights& w,
                               const DareSettings& settings) {
  std::vector<TerminalPenalty> nodes;
  nodes.reserve(grid.nodes().size());
  for (std::size_t k = 0; k < grid.nodes().size(); ++k) {
    try {
      nodes.push_back(fb_terminal_penalty(grid.nodes()[k], w, settings));
    } catch (const ConvergenceError& e) {
      std::ostringstream os;
      os << "terminal penalty at node " << k << ": " << e.what();
      throw ConvergenceError(os.str(), e.last_residual());
    }
  }
  return PenaltyGrid(grid.mesh(), w, std::move(nodes));
}

TerminalPenalty interpolate_penalty(const PenaltyGrid& grid, const OperatingPoint& rho) {
  const Mesh& mesh = grid.mesh();
  const GridCell c = mesh.locate(rho);
  const auto& at = [&](std::size_t i, std::size_t j) -> const Mat4& {
    return grid.nodes()[mesh.index(i, j)].reduced;
  };
  const bool on_node = (c.a == 0.0 || c.a == 1.0) && (c.b == 0.0 || c.b == 1.0);
  if (on_node) {
    return {at(c.a == 0.0 ? c.i0 : c.i1, c.b == 0.0 ? c.j0 : c.j1)};
  }
  TerminalPenalty out;
  out.reduced = c.blend<Mat4>(at(c.i0, c.j0), at(c.i0, c.j1), at(c.i1, c.j0), at(c.i1, c.j1));
  out.reduced = 0.5 * (out.reduced + out.reduced.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat4> eig(out.reduced);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    out.reduced = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
                  eig.eigenvectors().transpose();
  }
  return out;
}

}  // namespace airpath
