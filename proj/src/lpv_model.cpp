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

#include "airpath/lpv_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

namespace airpath {

double spectral_radius(const Mat2& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

void check_breakpoints(const std::vector<double>& bp, const char* name) {
  if (bp.size() < 2) {
    throw ConfigError(std::string(name) + " breakpoints: need at least two values");
  }
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (!std::isfinite(bp[i])) {
      throw ConfigError(std::string(name) + " breakpoints: non-finite value");
    }
    if (i > 0 && !(bp[i] > bp[i - 1])) {
      std::ostringstream os;
      os << name << " breakpoints not strictly increasing at index " << i;
      throw ConfigError(os.str());
    }
  }
}

// Lower cell index and fraction for a clamped coordinate.
std::pair<std::size_t, double> locate_axis(const std::vector<double>& bp, double v) {
  v = std::clamp(v, bp.front(), bp.back());
  auto it = std::upper_bound(bp.begin(), bp.end(), v);
  std::size_t hi = static_cast<std::size_t>(it - bp.begin());
  hi = std::clamp<std::size_t>(hi, 1, bp.size() - 1);
  const std::size_t lo = hi - 1;
  return {lo, (v - bp[lo]) / (bp[hi] - bp[lo])};
}

}  // namespace

Mesh::Mesh(std::vector<double> speed_breakpoints, std::vector<double> fuel_breakpoints)
    : speed_(std::move(speed_breakpoints)), fuel_(std::move(fuel_breakpoints)) {
  check_breakpoints(speed_, "speed");
  check_breakpoints(fuel_, "fuel");
}

OperatingPoint Mesh::clamp(const OperatingPoint& rho) const {
  return {std::clamp(rho.engine_speed, speed_.front(), speed_.back()),
          std::clamp(rho.fuel_rate, fuel_.front(), fuel_.back())};
}

GridCell Mesh::locate(const OperatingPoint& rho) const {
  if (speed_.size() < 2 || fuel_.size() < 2) throw ConfigError("mesh is empty");
  GridCell cell;
  auto [i0, a] = locate_axis(speed_, rho.engine_speed);
  auto [j0, b] = locate_axis(fuel_, rho.fuel_rate);
  cell.i0 = i0;
  cell.i1 = i0 + 1;
  cell.j0 = j0;
  cell.j1 = j0 + 1;
  cell.a = a;
  cell.b = b;
  return cell;
}

ModelGrid::ModelGrid(Mesh mesh, std::vector<LocalModel> nodes)
    : mesh_(std::move(mesh)), nodes_(std::move(nodes)) {
  if (nodes_.size() != mesh_.size()) {
    std::ostringstream os;
    os << "model grid: expected " << mesh_.size() << " nodes, got " << nodes_.size();
    throw ConfigError(os.str());
  }
}

Mesh uniform_mesh(double speed_lo, double speed_hi, std::size_t n_speed, double fuel_lo,
                  double fuel_hi, std::size_t n_fuel) {
  auto linspace = [](double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return v;
  };
  return Mesh(linspace(speed_lo, speed_hi, n_speed), linspace(fuel_lo, fuel_hi, n_fuel));
}

Mesh default_mesh() { return uniform_mesh(600.0, 2400.0, 9, 5.0, 105.0, 11); }

LocalModel interpolate_model(const ModelGrid& grid, const OperatingPoint& rho) {
  const Mesh& mesh = grid.mesh();
  const GridCell c = mesh.locate(rho);
  const LocalModel& m00 = grid.node(c.i0, c.j0);
  const LocalModel& m01 = grid.node(c.i0, c.j1);
  const LocalModel& m10 = grid.node(c.i1, c.j0);
  const LocalModel& m11 = grid.node(c.i1, c.j1);
  LocalModel out;
  out.A = c.blend<Mat2>(m00.A, m01.A, m10.A, m11.A);
  out.B = c.blend<Mat2>(m00.B, m01.B, m10.B, m11.B);
  out.Bf = c.blend<Vec2>(m00.Bf, m01.Bf, m10.Bf, m11.Bf);
  out.x_ss = c.blend<Vec2>(m00.x_ss, m01.x_ss, m10.x_ss, m11.x_ss);
  out.u_ss = c.blend<Vec2>(m00.u_ss, m01.u_ss, m10.u_ss, m11.u_ss);
  out.w_inj_ss = c.blend<double>(m00.w_inj_ss, m01.w_inj_ss, m10.w_inj_ss, m11.w_inj_ss);
  return out;
}

Vec2 step_model(const LocalModel& m, const Vec2& x, const Vec2& u, double w_inj) {
  return m.x_ss + m.A * (x - m.x_ss) + m.B * (u - m.u_ss) + m.Bf * (w_inj - m.w_inj_ss);
}

FitReport fit_local_model(const IoRecord& data, const Equilibrium& eq) {
  static constexpr std::array<const char*, 5> kRegressorNames = {"p_im", "chi_egr", "u_egr",
                                                                 "u_vgt", "w_inj"};
  const std::size_t n = data.x.size();
  if (data.u.size() != n || data.w_inj.size() != n) {
    throw IdentificationError("fit_local_model: x, u and w_inj sequences differ in length");
  }
  if (n < 10) throw IdentificationError("fit_local_model: need at least 10 samples");

  const Eigen::Index rows = static_cast<Eigen::Index>(n - 1);
  Eigen::Matrix<double, Eigen::Dynamic, 5> phi(rows, 5);
  Eigen::Matrix<double, Eigen::Dynamic, 2> y(rows, 2);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    phi.row(k).head<2>() = (data.x[ku] - eq.x_ss).transpose();
    phi.row(k).segment<2>(2) = (data.u[ku] - eq.u_ss).transpose();
    phi(k, 4) = data.w_inj[ku] - eq.w_inj_ss;
    y.row(k) = (data.x[ku + 1] - eq.x_ss).transpose();
  }

  // Column scaling makes the rank test and the ridge term unit-free.
  Eigen::Matrix<double, 5, 1> scale = phi.colwise().norm().transpose();
  for (int c = 0; c < 5; ++c) {
    if (!(scale(c) > 0.0)) {
      throw IdentificationError(std::string("fit_local_model: rank-deficient regressor, no excitation in ") +
                                kRegressorNames[static_cast<std::size_t>(c)]);
    }
  }
  const Eigen::Matrix<double, Eigen::Dynamic, 5> phi_s = phi * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 5>> svd(phi_s, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(4) < 1e-8 * sv(0)) {
    Eigen::Index worst = 0;
    svd.matrixV().col(4).cwiseAbs().maxCoeff(&worst);
    throw IdentificationError(std::string("fit_local_model: rank-deficient regressor along ") +
                              kRegressorNames[static_cast<std::size_t>(worst)]);
  }

  const Eigen::Matrix<double, 5, 5> gram = phi_s.transpose() * phi_s;
  const Eigen::Matrix<double, 5, 2> rhs = phi_s.transpose() * y;
  Eigen::Matrix<double, 5, 5> normal = gram;
  normal.diagonal().array() += 1e-10;
  const Eigen::LDLT<Eigen::Matrix<double, 5, 5>> ldlt(normal);
  // The ridge only conditions the factorization; refinement against the plain
  // normal equations removes its bias so the result is the least-squares fit.
  Eigen::Matrix<double, 5, 2> theta_s = ldlt.solve(rhs);
  for (int sweep = 0; sweep < 3; ++sweep) theta_s += ldlt.solve(rhs - gram * theta_s);
  const Eigen::Matrix<double, 5, 2> theta = scale.cwiseInverse().asDiagonal() * theta_s;

  FitReport report;
  LocalModel& m = report.model;
  m.A = theta.topRows<2>().transpose();
  m.B = theta.middleRows<2>(2).transpose();
  m.Bf = theta.row(4).transpose();
  m.x_ss = eq.x_ss;
  m.u_ss = eq.u_ss;
  m.w_inj_ss = eq.w_inj_ss;

  const Eigen::Matrix<double, Eigen::Dynamic, 2> resid = y - phi * theta;
  report.residual_rms = (resid.colwise().squaredNorm() / static_cast<double>(rows)).cwiseSqrt().transpose();
  report.signal_range = (y.colwise().maxCoeff() - y.colwise().minCoeff()).transpose();
  report.spectral_radius = spectral_radius(m.A);
  if (!(report.spectral_radius < kMaxIdentifiedSpectralRadius)) {
    std::ostringstream os;
    os << "fit_local_model: identified A is not stable (spectral radius " << report.spectral_radius
       << ")";
    throw IdentificationError(os.str());
  }
  return report;
}

}  // namespace airpath
