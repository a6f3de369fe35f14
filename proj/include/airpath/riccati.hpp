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

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "airpath/common.hpp"

namespace airpath {

enum class DareMethod {
  kDoubling,        // structure-preserving doubling, then fixed-point polishing
  kValueIteration,  // Riccati recursion from P = Q
};

struct DareSettings {
  double tolerance = 1e-10;
  int max_iterations = 100000;
  DareMethod method = DareMethod::kDoubling;
};

/// Frobenius norm of P - (A'PA - A'PB (R + B'PB)^{-1} B'PA + Q).
template <typename Scalar, int N, int M>
Scalar dare_residual(const Eigen::Matrix<Scalar, N, N>& A, const Eigen::Matrix<Scalar, N, M>& B,
                     const Eigen::Matrix<Scalar, N, N>& Q, const Eigen::Matrix<Scalar, M, M>& R,
                     const Eigen::Matrix<Scalar, N, N>& P) {
  const Eigen::Matrix<Scalar, M, N> BtPA = B.transpose() * P * A;
  const Eigen::Matrix<Scalar, M, M> S = R + B.transpose() * P * B;
  const Eigen::Matrix<Scalar, N, N> rhs =
      A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
  return (P - rhs).norm();
}

namespace detail {

template <typename Scalar, int N, int M>
Eigen::Matrix<Scalar, N, N> riccati_map(const Eigen::Matrix<Scalar, N, N>& A,
                                        const Eigen::Matrix<Scalar, N, M>& B,
                                        const Eigen::Matrix<Scalar, N, N>& Q,
                                        const Eigen::Matrix<Scalar, M, M>& R,
                                        const Eigen::Matrix<Scalar, N, N>& P) {
  const Eigen::Matrix<Scalar, M, N> BtPA = B.transpose() * P * A;
  const Eigen::Matrix<Scalar, M, M> S = R + B.transpose() * P * B;
  Eigen::Matrix<Scalar, N, N> next = A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
  return Scalar(0.5) * (next + next.transpose());
}

// Structure-preserving doubling: H_k converges quadratically to the
// stabilizing solution. Returns false when the iteration breaks down.
template <typename Scalar, int N, int M>
bool dare_doubling(const Eigen::Matrix<Scalar, N, N>& A, const Eigen::Matrix<Scalar, N, M>& B,
                   const Eigen::Matrix<Scalar, N, N>& Q, const Eigen::Matrix<Scalar, M, M>& R,
                   Eigen::Matrix<Scalar, N, N>& P) {
  using MatN = Eigen::Matrix<Scalar, N, N>;
  const Eigen::Index n = A.rows();
  MatN Ak = A;
  MatN G = B * R.ldlt().solve(B.transpose());
  G = Scalar(0.5) * (G + G.transpose()).eval();
  MatN H = Q;
  const MatN I = MatN::Identity(n, n);
  for (int it = 0; it < 64; ++it) {
    const Eigen::PartialPivLU<MatN> W(I + G * H);
    const MatN WA = W.solve(Ak);
    const MatN WG = W.solve(G);
    MatN H_next = H + Ak.transpose() * H * WA;
    MatN G_next = G + Ak * WG * Ak.transpose();
    H_next = Scalar(0.5) * (H_next + H_next.transpose()).eval();
    G_next = Scalar(0.5) * (G_next + G_next.transpose()).eval();
    Ak = (Ak * WA).eval();
    if (!H_next.allFinite() || !G_next.allFinite() || !Ak.allFinite()) return false;
    const Scalar change = (H_next - H).norm();
    H = H_next;
    G = G_next;
    if (change <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + H.norm())) break;
  }
  P = H;
  return true;
}

}  // namespace detail

/// Solves the discrete algebraic Riccati equation. Both methods end on the
/// fixed-point Riccati recursion: converged when one step changes P by no
/// more than settings.tolerance (Frobenius), which is exactly the DARE
/// residual of the returned P. Doubling supplies a starting point that is
/// already at the solution, so only a few polishing steps remain.
template <typename Scalar, int N, int M>
Eigen::Matrix<Scalar, N, N> solve_dare(const Eigen::Matrix<Scalar, N, N>& A,
                                       const Eigen::Matrix<Scalar, N, M>& B,
                                       const Eigen::Matrix<Scalar, N, N>& Q,
                                       const Eigen::Matrix<Scalar, M, M>& R,
                                       const DareSettings& settings = {}) {
  using MatN = Eigen::Matrix<Scalar, N, N>;
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() ||
      Q.cols() != A.cols() || R.rows() != B.cols() || R.cols() != B.cols()) {
    throw ConfigError("solve_dare: inconsistent dimensions");
  }
  if (Eigen::LLT<Eigen::Matrix<Scalar, M, M>>(R).info() != Eigen::Success) {
    throw DomainError("solve_dare: R must be positive definite");
  }

  MatN P = Q;
  if (settings.method == DareMethod::kDoubling) {
    MatN X;
    if (detail::dare_doubling<Scalar, N, M>(A, B, Q, R, X)) P = X;
  }
  Scalar step = std::numeric_limits<Scalar>::infinity();
  Scalar best = step;
  int stalled = 0;
  for (int it = 0; it < settings.max_iterations; ++it) {
    const MatN next = detail::riccati_map<Scalar, N, M>(A, B, Q, R, P);
    step = (next - P).norm();
    if (step <= Scalar(settings.tolerance)) return P;
    P = next;
    // Steps stuck at the rounding floor of |P| will never reach the tolerance.
    if (step < best) {
      best = step;
      stalled = 0;
    } else if (++stalled > 200) {
      throw ConvergenceError("solve_dare: residual stalled at " + std::to_string(static_cast<double>(best)) +
                                 " above tolerance (rounding floor of |P|)",
                             static_cast<double>(best));
    }
  }
  throw ConvergenceError("solve_dare: no convergence after " +
                             std::to_string(settings.max_iterations) + " iterations",
                         static_cast<double>(step));
}

/// State-feedback gain K of u = -K x for the LQR problem whose cost-to-go is P.
template <typename Scalar, int N, int M>
Eigen::Matrix<Scalar, M, N> lqr_gain(const Eigen::Matrix<Scalar, N, N>& A,
                                     const Eigen::Matrix<Scalar, N, M>& B,
                                     const Eigen::Matrix<Scalar, M, M>& R,
                                     const Eigen::Matrix<Scalar, N, N>& P) {
  const Eigen::Matrix<Scalar, M, M> S = R + B.transpose() * P * B;
  return S.ldlt().solve(B.transpose() * P * A);
}

}  // namespace airpath
