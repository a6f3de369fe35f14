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

#include "airpath/fb_mpc.hpp"

#include <algorithm>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace airpath {

RegionTable::RegionTable(std::vector<Region> regions) : regions_(std::move(regions)) {
  if (regions_.empty()) throw ConfigError("region table: no regions");
  const Region& last = regions_.back();
  if (!(last.speed.unbounded() && last.fuel.unbounded() && last.chi_egr.unbounded())) {
    throw ConfigError("region table: last region must be an unbounded catch-all");
  }
  for (const Region& r : regions_) {
    Eigen::LLT<Mat2> llt(r.weights.R_ext);
    Eigen::SelfAdjointEigenSolver<Mat2> q(r.weights.Q_e);
    if (llt.info() != Eigen::Success || q.eigenvalues().minCoeff() < -1e-12 ||
        !r.weights.Q_e.isApprox(r.weights.Q_e.transpose())) {
      throw ConfigError("region table: region '" + r.name + "' needs Q_e >= 0 and R_ext > 0");
    }
  }

  // Bounded regions must be pairwise disjoint: sample a lattice spanning all
  // finite thresholds and count matches.
  auto axis = [&](auto member) {
    std::vector<double> cuts;
    for (const Region& r : regions_) {
      const Interval& iv = r.*member;
      if (std::isfinite(iv.lo)) cuts.push_back(iv.lo);
      if (std::isfinite(iv.hi)) cuts.push_back(iv.hi);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<double> pts;
    if (cuts.empty()) return std::vector<double>{0.0};
    const double span = std::max(1.0, cuts.back() - cuts.front());
    pts.push_back(cuts.front() - 0.1 * span);
    for (std::size_t i = 0; i < cuts.size(); ++i) {
      pts.push_back(cuts[i]);
      const double next = i + 1 < cuts.size() ? cuts[i + 1] : cuts[i] + 0.2 * span;
      for (int s = 1; s < 20; ++s) pts.push_back(cuts[i] + (next - cuts[i]) * s / 20.0);
    }
    return pts;
  };
  const auto speeds = axis(&Region::speed);
  const auto fuels = axis(&Region::fuel);
  const auto chis = axis(&Region::chi_egr);
  for (double s : speeds) {
    for (double f : fuels) {
      for (double c : chis) {
        int matches = 0;
        for (std::size_t k = 0; k + 1 < regions_.size(); ++k) matches += regions_[k].contains(s, f, c);
        if (matches > 1) {
          std::ostringstream os;
          os << "region table: overlapping regions at (" << s << ", " << f << ", " << c << ")";
          throw ConfigError(os.str());
        }
      }
    }
  }
}

std::size_t RegionTable::select(double engine_speed, double fuel_rate, double chi_egr) const {
  for (std::size_t k = 0; k < regions_.size(); ++k) {
    if (regions_[k].contains(engine_speed, fuel_rate, chi_egr)) return k;
  }
  return regions_.size() - 1;
}

std::vector<TrackingWeights> RegionTable::distinct_weights() const {
  std::vector<TrackingWeights> out;
  for (const Region& r : regions_) {
    if (std::find(out.begin(), out.end(), r.weights) == out.end()) out.push_back(r.weights);
  }
  return out;
}

std::size_t select_region(const RegionTable& table, double engine_speed, double fuel_rate,
                          double chi_egr) {
  return table.select(engine_speed, fuel_rate, chi_egr);
}

TrackingWeights default_tracking_weights() {
  TrackingWeights w;
  w.Q_e = Vec2(100.0, 2500.0).asDiagonal();
  w.R_ext = Vec2(0.01, 0.01).asDiagonal();
  return w;
}

RegionTable default_region_table(const TrackingWeights& weights) {
  constexpr double kSpeed = 1400.0;  // rpm
  constexpr double kFuel = 45.0;     // mg/stroke
  constexpr double kChi = 0.25;
  const Interval any;
  const Interval low_speed{-any.hi, kSpeed}, high_speed{kSpeed, any.hi};
  const Interval low_fuel{-any.hi, kFuel}, high_fuel{kFuel, any.hi};
  const Interval low_chi{-any.hi, kChi}, high_chi{kChi, any.hi};
  return RegionTable({
      {"low speed, low load, low EGR", low_speed, low_fuel, low_chi, weights},
      {"low speed, low load, high EGR", low_speed, low_fuel, high_chi, weights},
      {"low speed, high load", low_speed, high_fuel, any, weights},
      {"high speed, low load, low EGR", high_speed, low_fuel, low_chi, weights},
      {"high speed, low load, high EGR", high_speed, low_fuel, high_chi, weights},
      {"high speed, high load, low EGR", high_speed, high_fuel, low_chi, weights},
      {"high speed, high load, high EGR", any, any, any, weights},
  });
}

void FbMpcConfig::validate() const {
  if (horizon < 2) throw ConfigError("fb_mpc.horizon must be at least 2");
  if (!(sample_period > 0.0)) throw ConfigError("fb_mpc.sample_period must be positive");
  if (!(slack_weight > 0.0)) throw ConfigError("fb_mpc.slack_weight must be positive");
  if (!((x_min.array() < x_max.array()).all())) throw ConfigError("fb_mpc: x_min must be below x_max");
  if (!((u_min.array() < u_max.array()).all())) throw ConfigError("fb_mpc: u_min must be below u_max");
  if (regions.regions().empty()) throw ConfigError("fb_mpc: empty region table");
}

ExtendedState init_extended(const Vec2& x_k, const Vec2& x_prev, const Vec2& u_bar_prev,
                            const Vec2& r_k) {
  return {x_k - x_prev, x_k - r_k, x_prev, u_bar_prev};
}

Mat8 extended_dynamics(const Mat2& A) {
  Mat8 F = Mat8::Zero();
  F.block<2, 2>(0, 0) = A;
  F.block<2, 2>(2, 0) = A;
  F.block<2, 2>(2, 2).setIdentity();
  F.block<2, 2>(4, 0).setIdentity();
  F.block<2, 2>(4, 4).setIdentity();
  F.block<2, 2>(6, 6).setIdentity();
  return F;
}

Eigen::Matrix<double, 8, 2> extended_input(const Mat2& B) {
  Eigen::Matrix<double, 8, 2> G = Eigen::Matrix<double, 8, 2>::Zero();
  G.block<2, 2>(0, 0) = B;
  G.block<2, 2>(2, 0) = B;
  G.block<2, 2>(6, 0).setIdentity();
  return G;
}

FbDecoder::FbDecoder(const LocalModel& model, const ExtendedState& ext0, int horizon)
    : A_ext_(extended_dynamics(model.A)), B_ext_(extended_input(model.B)), ext0_(ext0), horizon_(horizon) {}

FbTrajectory FbDecoder::decode(const VectorXd& z) const {
  if (z.size() != 2 * horizon_ + 2) throw ConfigError("FbDecoder: decision vector size mismatch");
  FbTrajectory t;
  Vec8 xi = ext0_.stacked();
  t.ext.push_back(ext0_);
  t.x.push_back(xi.segment<2>(0) + xi.segment<2>(4));
  for (int j = 0; j < horizon_; ++j) {
    const Vec2 du = z.segment<2>(2 * j);
    t.delta_u.push_back(du);
    t.u.push_back(xi.segment<2>(6) + du);
    xi = (A_ext_ * xi + B_ext_ * du).eval();
    t.ext.push_back(ExtendedState::from(xi));
    t.x.push_back(xi.segment<2>(0) + xi.segment<2>(4));
  }
  t.slack = z.tail<2>();
  return t;
}

FbQp build_qp(const FbMpcConfig& config, const LocalModel& model, const TerminalPenalty& penalty,
              const TrackingWeights& weights, const ExtendedState& ext0,
              const Vec2& feedforward_delta) {
  const int N = config.horizon;
  if (N < 2) throw ConfigError("build_qp: horizon must be at least 2");
  const Eigen::Index nu = 2 * N;
  const Eigen::Index nz = nu + 2;

  const Mat8 F = extended_dynamics(model.A);
  const Eigen::Matrix<double, 8, 2> G0 = extended_input(model.B);

  // Impulse blocks F^m G0 and the free response F^j xi0.
  std::vector<Eigen::Matrix<double, 8, 2>> impulse(static_cast<std::size_t>(N));
  impulse[0] = G0;
  for (int m = 1; m < N; ++m) impulse[static_cast<std::size_t>(m)] = F * impulse[static_cast<std::size_t>(m - 1)];
  std::vector<Vec8> free(static_cast<std::size_t>(N + 1));
  free[0] = ext0.stacked();
  for (int j = 1; j <= N; ++j) free[static_cast<std::size_t>(j)] = F * free[static_cast<std::size_t>(j - 1)];

  // Rows of e_j (j = 1..N-1) and x_j (j = 1..N) as functions of the moves.
  MatrixXd psi_e = MatrixXd::Zero(2 * (N - 1), nu);
  MatrixXd psi_x = MatrixXd::Zero(2 * N, nu);
  VectorXd e_free(2 * (N - 1));
  VectorXd x_free(2 * N);
  for (int j = 1; j <= N; ++j) {
    const Vec8& fj = free[static_cast<std::size_t>(j)];
    x_free.segment<2>(2 * (j - 1)) = fj.segment<2>(0) + fj.segment<2>(4);
    if (j < N) e_free.segment<2>(2 * (j - 1)) = fj.segment<2>(2);
    for (int i = 0; i < j; ++i) {
      const auto& blk = impulse[static_cast<std::size_t>(j - 1 - i)];
      psi_x.block<2, 2>(2 * (j - 1), 2 * i) = blk.middleRows<2>(0) + blk.middleRows<2>(4);
      if (j < N) psi_e.block<2, 2>(2 * (j - 1), 2 * i) = blk.middleRows<2>(2);
    }
  }
  Eigen::Matrix<double, 8, Eigen::Dynamic> gamma_n(8, nu);
  for (int i = 0; i < N; ++i) gamma_n.middleCols<2>(2 * i) = impulse[static_cast<std::size_t>(N - 1 - i)];

  const Mat8 P = penalty.embedded();
  MatrixXd q_psi(psi_e.rows(), nu);
  for (int j = 0; j < N - 1; ++j) q_psi.middleRows<2>(2 * j) = weights.Q_e * psi_e.middleRows<2>(2 * j);
  const Eigen::Matrix<double, 8, Eigen::Dynamic> p_gamma = P * gamma_n;

  FbQp out;
  DenseQp<double>& qp = out.qp;
  qp.H = MatrixXd::Zero(nz, nz);
  auto Huu = qp.H.topLeftCorner(nu, nu);
  Huu.noalias() = psi_e.transpose() * q_psi;
  Huu.noalias() += gamma_n.transpose() * p_gamma;
  for (int i = 0; i < N; ++i) Huu.block<2, 2>(2 * i, 2 * i) += weights.R_ext;
  Huu *= 2.0;
  qp.H.bottomRightCorner<2, 2>() = 2.0 * config.slack_weight * Mat2::Identity();
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  qp.H.diagonal().array() += config.hessian_regularization;

  VectorXd qe_free(e_free.size());
  for (int j = 0; j < N - 1; ++j) qe_free.segment<2>(2 * j) = weights.Q_e * e_free.segment<2>(2 * j);
  qp.f = VectorXd::Zero(nz);
  qp.f.head(nu) = 2.0 * (psi_e.transpose() * qe_free + p_gamma.transpose() * free[static_cast<std::size_t>(N)]);

  // Feedforward-induced shift of the true state: sum_{m<j} A^{j-1-m} B * delta.
  VectorXd shift = VectorXd::Zero(2 * N);
  if (config.tighten_for_feedforward) {
    Vec2 acc = Vec2::Zero();
    Vec2 term = model.B * feedforward_delta;
    for (int j = 1; j <= N; ++j) {
      acc += term;
      shift.segment<2>(2 * (j - 1)) = acc;
      term = model.A * term;
    }
  }

  const Eigen::Index m = 8 * N + 2;
  qp.G = MatrixXd::Zero(m, nz);
  qp.h = VectorXd::Zero(m);
  const Eigen::Index xs = 2 * N;
  qp.G.block(0, 0, xs, nu) = psi_x;
  qp.G.block(xs, 0, xs, nu) = -psi_x;
  for (int j = 0; j < N; ++j) {
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index r = 2 * j + c;
      qp.G(r, nu + c) = -1.0;
      qp.G(xs + r, nu + c) = -1.0;
      qp.h(r) = config.x_max(c) - x_free(r) - shift(r);
      qp.h(xs + r) = -config.x_min(c) + x_free(r) + shift(r);
    }
  }
  const Eigen::Index us = 2 * xs;
  for (int j = 0; j < N; ++j) {
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index r = 2 * j + c;
      for (int i = 0; i <= j; ++i) {
        qp.G(us + r, 2 * i + c) = 1.0;
        qp.G(us + xs + r, 2 * i + c) = -1.0;
      }
      qp.h(us + r) = config.u_max(c) - ext0.u_prev(c);
      qp.h(us + xs + r) = -config.u_min(c) + ext0.u_prev(c);
    }
  }
  qp.G(m - 2, nu) = -1.0;
  qp.G(m - 1, nu + 1) = -1.0;

  out.decoder = FbDecoder(model, ext0, N);
  return out;
}

FbMpc::FbMpc(FbMpcConfig config, const ModelGrid& grid) : config_(std::move(config)), grid_(&grid) {
  config_.validate();
  if (config_.penalty_source == PenaltySource::kInterpolatedGrid) {
    for (const TrackingWeights& w : config_.regions.distinct_weights()) {
      penalties_.push_back(build_penalty_grid(grid, w, config_.dare));
    }
  }
}

FbMpc::FbMpc(FbMpcConfig config, const ModelGrid& grid, std::vector<PenaltyGrid> penalties)
    : config_(std::move(config)), grid_(&grid), penalties_(std::move(penalties)) {
  config_.validate();
  for (const PenaltyGrid& pg : penalties_) {
    if (!(pg.mesh() == grid.mesh())) throw ConfigError("FbMpc: penalty grid mesh differs from model grid");
  }
  if (config_.penalty_source == PenaltySource::kInterpolatedGrid) {
    for (const TrackingWeights& w : config_.regions.distinct_weights()) {
      const bool have = std::any_of(penalties_.begin(), penalties_.end(),
                                    [&](const PenaltyGrid& pg) { return pg.weights() == w; });
      if (!have) penalties_.push_back(build_penalty_grid(grid, w, config_.dare));
    }
  }
}

TerminalPenalty FbMpc::penalty_at(const LocalModel& model, const OperatingPoint& rho,
                                  const TrackingWeights& weights) const {
  if (config_.penalty_source == PenaltySource::kOnlineDare) {
    return fb_terminal_penalty(model, weights, config_.dare);
  }
  for (const PenaltyGrid& pg : penalties_) {
    if (pg.weights() == weights) return interpolate_penalty(pg, rho);
  }
  throw ConfigError("FbMpc: no terminal penalty grid for the selected weights");
}

FbStepResult FbMpc::step(const Vec2& x_k, const Vec2& x_prev, const Vec2& u_bar_prev,
                         const Vec2& r_k, const OperatingPoint& rho, const Vec2& feedforward_delta) {
  const OperatingPoint sched = grid_->mesh().clamp(rho);
  const LocalModel model = interpolate_model(*grid_, sched);
  FbStepResult out;
  out.diagnostics.region = config_.regions.select(rho.engine_speed, rho.fuel_rate, x_k(1));
  const TrackingWeights& w = config_.regions.regions()[out.diagnostics.region].weights;
  const TerminalPenalty penalty = penalty_at(model, sched, w);

  const ExtendedState ext0 = init_extended(x_k, x_prev, u_bar_prev, r_k);
  const FbQp fbqp = build_qp(config_, model, penalty, w, ext0, feedforward_delta);
  const QpSolution<double> sol = solve_qp(fbqp.qp, config_.qp, warm_active_);

  out.diagnostics.status = sol.status;
  out.diagnostics.kkt_residual = sol.kkt_residual;
  out.diagnostics.iterations = sol.iterations;
  if (sol.status == QpStatus::kInfeasible) {
    out.delta_u.setZero();
    warm_active_.clear();
  } else {
    out.delta_u = sol.z.head<2>();
    out.diagnostics.slack = sol.z.tail<2>();
    warm_active_ = sol.active_set;
  }
  out.u = (u_bar_prev + out.delta_u).cwiseMax(config_.u_min).cwiseMin(config_.u_max);
  return out;
}

}  // namespace airpath
