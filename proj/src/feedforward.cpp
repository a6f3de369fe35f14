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

#include "airpath/feedforward.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace airpath {

const char* to_string(FfMode mode) {
  switch (mode) {
    case FfMode::kNone:
      return "none";
    case FfMode::kLookupTable:
      return "lut";
    case FfMode::kMpc:
      return "mpc";
  }
  return "unknown";
}

FfMode parse_ff_mode(const std::string& token) {
  if (token == "none") return FfMode::kNone;
  if (token == "lut" || token == "lookup_table") return FfMode::kLookupTable;
  if (token == "mpc") return FfMode::kMpc;
  throw ConfigError("unknown feedforward mode '" + token + "'");
}

Vec2 lut_ff(const ModelGrid& grid, const OperatingPoint& rho) {
  const Mesh& mesh = grid.mesh();
  const GridCell c = mesh.locate(rho);
  return c.blend<Vec2>(grid.node(c.i0, c.j0).u_ss, grid.node(c.i0, c.j1).u_ss,
                       grid.node(c.i1, c.j0).u_ss, grid.node(c.i1, c.j1).u_ss);
}

std::vector<Vec2> predicted_true_state(const LocalModel& model, const std::vector<Vec2>& x_pred,
                                       const Vec2& delta_ff) {
  std::vector<Vec2> out(x_pred.size());
  Vec2 acc = Vec2::Zero();
  Vec2 term = model.B * delta_ff;
  for (std::size_t j = 0; j < x_pred.size(); ++j) {
    out[j] = x_pred[j] + acc;
    acc += term;
    term = model.A * term;
  }
  return out;
}

void FfMpcConfig::validate() const {
  if (horizon < 1) throw ConfigError("ff_mpc.horizon must be positive");
  Eigen::LLT<Mat2> r(R_ff);
  if (r.info() != Eigen::Success) throw ConfigError("ff_mpc.R_ff must be positive definite");
  Eigen::LDLT<Mat2> q(Q_ff);
  if (q.info() != Eigen::Success || (q.vectorD().array() < 0.0).any()) {
    throw ConfigError("ff_mpc.Q_ff must be positive semidefinite");
  }
  if (!((x_min.array() < x_max.array()).all()) || !((u_min.array() < u_max.array()).all())) {
    throw ConfigError("ff_mpc: bounds must satisfy min < max");
  }
}

Vec2 steady_input_for_target(const LocalModel& model, const Vec2& r_dev) {
  const Vec2 rhs = (Mat2::Identity() - model.A) * r_dev;
  return model.B.completeOrthogonalDecomposition().solve(rhs);
}

DenseQp<double> build_ff_qp(const FfMpcConfig& config, const LocalModel& model, const Mat2& P_terminal,
                            const Vec2& x_dev0, const Vec2& r_dev) {
  const int N = config.horizon;
  const Eigen::Index nu = 2 * N;
  const Vec2 u_ref = config.input_reference == FfMpcConfig::InputReference::kTargetInput
                         ? steady_input_for_target(model, r_dev)
                         : Vec2::Zero();

  std::vector<Mat2> impulse(static_cast<std::size_t>(N));  // A^m B
  impulse[0] = model.B;
  for (int m = 1; m < N; ++m) impulse[static_cast<std::size_t>(m)] = model.A * impulse[static_cast<std::size_t>(m - 1)];

  // x~_j = x_free_j + psi_j U, j = 1..N.
  MatrixXd psi = MatrixXd::Zero(2 * N, nu);
  VectorXd x_free(2 * N);
  Vec2 xf = x_dev0;
  for (int j = 1; j <= N; ++j) {
    xf = model.A * xf;
    x_free.segment<2>(2 * (j - 1)) = xf;
    for (int i = 0; i < j; ++i) psi.block<2, 2>(2 * (j - 1), 2 * i) = impulse[static_cast<std::size_t>(j - 1 - i)];
  }

  // Weight per predicted state: Q for j = 1..N-1, P for j = N.
  MatrixXd w_psi(2 * N, nu);
  VectorXd w_err(2 * N);
  for (int j = 1; j <= N; ++j) {
    const Mat2& W = j < N ? config.Q_ff : P_terminal;
    w_psi.middleRows<2>(2 * (j - 1)) = W * psi.middleRows<2>(2 * (j - 1));
    w_err.segment<2>(2 * (j - 1)) = W * (x_free.segment<2>(2 * (j - 1)) - r_dev);
  }

  DenseQp<double> qp;
  qp.H.noalias() = psi.transpose() * w_psi;
  qp.f.noalias() = psi.transpose() * w_err;
  for (int i = 0; i < N; ++i) {
    qp.H.block<2, 2>(2 * i, 2 * i) += config.R_ff;
    qp.f.segment<2>(2 * i) -= config.R_ff * u_ref;
  }
  qp.H = (qp.H + qp.H.transpose()).eval();  // 2 * symmetric part
  qp.f *= 2.0;
  qp.H.diagonal().array() += config.hessian_regularization;

  const Eigen::Index xs = 2 * N;
  qp.G = MatrixXd::Zero(4 * xs, nu);
  qp.h.resize(4 * xs);
  qp.G.topRows(xs) = psi;
  qp.G.middleRows(xs, xs) = -psi;
  for (int j = 0; j < N; ++j) {
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index r = 2 * j + c;
      qp.h(r) = config.x_max(c) - model.x_ss(c) - x_free(r);
      qp.h(xs + r) = -config.x_min(c) + model.x_ss(c) + x_free(r);
      qp.G(2 * xs + r, r) = 1.0;
      qp.G(3 * xs + r, r) = -1.0;
      qp.h(2 * xs + r) = config.u_max(c) - model.u_ss(c);
      qp.h(3 * xs + r) = -config.u_min(c) + model.u_ss(c);
    }
  }
  return qp;
}

FfMpc::FfMpc(FfMpcConfig config, const ModelGrid& grid) : config_(std::move(config)), grid_(&grid) {
  config_.validate();
}

void FfMpc::reset(const Vec2& x_hat) {
  x_hat_ = x_hat;
  initialized_ = true;
  warm_active_.clear();
}

FfMpcResult FfMpc::step(const OperatingPoint& rho, const Vec2& r_k) {
  const OperatingPoint sched = grid_->mesh().clamp(rho);
  const LocalModel model = interpolate_model(*grid_, sched);
  if (!initialized_) reset(model.x_ss);

  const Mat2 P = solve_dare<double, 2, 2>(model.A, model.B, config_.Q_ff, config_.R_ff, config_.dare);
  const Vec2 x_dev0 = x_hat_ - model.x_ss;
  const Vec2 r_dev = r_k - model.x_ss;
  const DenseQp<double> qp = build_ff_qp(config_, model, P, x_dev0, r_dev);
  const QpSolution<double> sol = solve_qp(qp, config_.qp, warm_active_);

  FfMpcResult out;
  out.status = sol.status;
  out.kkt_residual = sol.kkt_residual;
  out.iterations = sol.iterations;
  if (sol.status == QpStatus::kInfeasible) {
    out.fallback = true;
    out.u_ff = model.u_ss;
    warm_active_.clear();
    return out;
  }
  warm_active_ = sol.active_set;
  const int N = config_.horizon;
  Vec2 x = x_dev0;
  out.x_pred.push_back(x_hat_);
  for (int j = 0; j < N; ++j) {
    const Vec2 u = sol.z.segment<2>(2 * j);
    out.u_pred.push_back(u + model.u_ss);
    x = model.A * x + model.B * u;
    out.x_pred.push_back(x + model.x_ss);
  }
  out.u_ff = out.u_pred.front().cwiseMax(config_.u_min).cwiseMin(config_.u_max);
  return out;
}

void FfMpc::advance(const OperatingPoint& rho, const Vec2& u) {
  const OperatingPoint sched = grid_->mesh().clamp(rho);
  const LocalModel model = interpolate_model(*grid_, sched);
  if (!initialized_) reset(model.x_ss);
  x_hat_ = step_model(model, x_hat_, u, sched.fuel_rate);
}

}  // namespace airpath
