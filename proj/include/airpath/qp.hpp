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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "airpath/common.hpp"

namespace airpath {

/// Strictly convex dense QP:  min 1/2 z'Hz + f'z  s.t.  G z <= h.
template <typename Scalar>
struct DenseQp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix H;
  Vector f;
  Matrix G;
  Vector h;

  Eigen::Index num_variables() const { return H.rows(); }
  Eigen::Index num_constraints() const { return G.rows(); }
};

enum class QpStatus { kOptimal, kMaxIterations, kInfeasible };

inline const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kMaxIterations:
      return "max_iterations";
    case QpStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

template <typename Scalar>
struct QpSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lambda;
  QpStatus status = QpStatus::kInfeasible;
  Scalar kkt_residual = std::numeric_limits<Scalar>::infinity();
  int iterations = 0;
  /// Indices of the constraints active at termination, in insertion order.
  std::vector<Eigen::Index> active_set;
};

struct QpSettings {
  double tolerance = 1e-8;
  int max_iterations = 500;
};

/// Infinity-norm KKT residual of the primal/dual pair (z, lambda): the largest
/// of stationarity, primal infeasibility, dual negativity and complementarity.
template <typename Scalar>
Scalar kkt_residual(const DenseQp<Scalar>& qp,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lambda) {
  using std::abs;
  using std::max;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad = qp.H * z + qp.f;
  Scalar residual(0);
  if (qp.num_constraints() > 0) {
    grad.noalias() += qp.G.transpose() * lambda;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> slack = qp.G * z - qp.h;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
      residual = max(residual, slack(i));
      residual = max(residual, -lambda(i));
      // Rows with h = +inf never bind; skipping zero multipliers avoids 0 * inf.
      if (lambda(i) != Scalar(0)) residual = max(residual, abs(lambda(i) * slack(i)));
    }
  }
  if (grad.size() > 0) residual = max(residual, grad.cwiseAbs().maxCoeff());
  return residual;
}

template <typename Scalar>
Scalar kkt_residual(const DenseQp<Scalar>& qp, const QpSolution<Scalar>& sol) {
  return kkt_residual(qp, sol.z, sol.lambda);
}

namespace detail {

// Dual active-set method of Goldfarb and Idnani. The factorization keeps
// J = L^{-T} Q and the upper-triangular R with Q' L^{-1} N = [R; 0], where N
// holds the (inward) normals of the active constraints and H = L L'.
template <typename Scalar>
class GoldfarbIdnani {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  GoldfarbIdnani(const DenseQp<Scalar>& qp, const QpSettings& settings)
      : qp_(qp), settings_(settings), n_(qp.num_variables()), m_(qp.num_constraints()) {}

  QpSolution<Scalar> solve(std::span<const Eigen::Index> warm_active) {
    QpSolution<Scalar> out;
    out.z = Vector::Zero(n_);
    out.lambda = Vector::Zero(m_);

    Eigen::LLT<Matrix> llt(qp_.H);
    if (llt.info() != Eigen::Success) {
      throw DomainError("solve_qp: Hessian is not positive definite");
    }
    J_ = Matrix::Identity(n_, n_);
    llt.matrixU().solveInPlace(J_);  // J = U^{-1} = L^{-T}
    R_ = Matrix::Zero(n_, n_);
    x_ = -llt.solve(qp_.f);
    active_.clear();
    u_.clear();
    is_active_.assign(static_cast<std::size_t>(m_), false);

    const Scalar feas_tol = Scalar(settings_.tolerance) * Scalar(1e-2);
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    const Scalar tiny = std::numeric_limits<Scalar>::epsilon() * Scalar(100);
    int iterations = 0;
    Vector d(n_), z(n_), r(n_);

    while (true) {
      const Eigen::Index p = pick_violated(warm_active, feas_tol);
      if (p < 0) {
        finish(out, QpStatus::kOptimal, iterations);
        return out;
      }
      Vector np = -qp_.G.row(p).transpose();
      Scalar sp = qp_.h(p) - qp_.G.row(p).dot(x_);
      Scalar up(0);

      while (true) {
        if (++iterations > settings_.max_iterations) {
          finish(out, QpStatus::kMaxIterations, iterations - 1);
          return out;
        }
        const Eigen::Index q = static_cast<Eigen::Index>(active_.size());
        d.noalias() = J_.transpose() * np;
        z.noalias() = J_.rightCols(n_ - q) * d.tail(n_ - q);
        if (q > 0) {
          r.head(q) = R_.topLeftCorner(q, q).template triangularView<Eigen::Upper>().solve(d.head(q));
        }

        Scalar t1 = inf;
        Eigen::Index drop = -1;
        for (Eigen::Index j = 0; j < q; ++j) {
          if (r(j) > tiny) {
            const Scalar ratio = u_[static_cast<std::size_t>(j)] / r(j);
            if (ratio < t1) {
              t1 = ratio;
              drop = j;
            }
          }
        }
        const Scalar zn = z.dot(np);
        const Scalar t2 = (std::abs(zn) > tiny * std::max(Scalar(1), np.squaredNorm())) ? -sp / zn : inf;
        const Scalar t = std::min(t1, t2);

        if (t == inf) {
          finish(out, QpStatus::kInfeasible, iterations);
          return out;
        }
        for (Eigen::Index j = 0; j < q; ++j) u_[static_cast<std::size_t>(j)] -= t * r(j);
        up += t;
        if (t2 == inf) {
          drop_constraint(drop);
          continue;
        }
        x_.noalias() += t * z;
        sp = qp_.h(p) - qp_.G.row(p).dot(x_);
        if (t == t2) {
          add_constraint(p, d, up);
          break;
        }
        drop_constraint(drop);
      }
    }
  }

 private:
  Eigen::Index pick_violated(std::span<const Eigen::Index> warm_active, Scalar feas_tol) const {
    for (Eigen::Index i : warm_active) {
      if (i < 0 || i >= m_ || is_active_[static_cast<std::size_t>(i)]) continue;
      if (qp_.G.row(i).dot(x_) - qp_.h(i) > feas_tol) return i;
    }
    Eigen::Index best = -1;
    Scalar worst = feas_tol;
    if (m_ == 0) return best;
    const Vector violation = qp_.G * x_ - qp_.h;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (is_active_[static_cast<std::size_t>(i)]) continue;
      if (violation(i) > worst) {
        worst = violation(i);
        best = i;
      }
    }
    return best;
  }

  void add_constraint(Eigen::Index p, Vector& d, Scalar up) {
    const Eigen::Index q = static_cast<Eigen::Index>(active_.size());
    for (Eigen::Index j = n_ - 1; j > q; --j) {
      const Scalar a = d(j - 1);
      const Scalar b = d(j);
      if (b == Scalar(0)) continue;
      const Scalar hyp = std::hypot(a, b);
      const Scalar c = a / hyp;
      const Scalar s = b / hyp;
      d(j - 1) = hyp;
      d(j) = Scalar(0);
      rotate_columns(J_, j - 1, j, c, s);
    }
    R_.col(q).head(q + 1) = d.head(q + 1);
    active_.push_back(p);
    u_.push_back(up);
    is_active_[static_cast<std::size_t>(p)] = true;
  }

  void drop_constraint(Eigen::Index l) {
    const Eigen::Index q = static_cast<Eigen::Index>(active_.size());
    is_active_[static_cast<std::size_t>(active_[static_cast<std::size_t>(l)])] = false;
    for (Eigen::Index j = l; j < q - 1; ++j) R_.col(j).head(q) = R_.col(j + 1).head(q);
    R_.col(q - 1).setZero();
    for (Eigen::Index j = l; j < q - 1; ++j) {
      const Scalar a = R_(j, j);
      const Scalar b = R_(j + 1, j);
      if (b == Scalar(0)) continue;
      const Scalar hyp = std::hypot(a, b);
      const Scalar c = a / hyp;
      const Scalar s = b / hyp;
      for (Eigen::Index k = j; k < q - 1; ++k) {
        const Scalar rj = R_(j, k);
        const Scalar rj1 = R_(j + 1, k);
        R_(j, k) = c * rj + s * rj1;
        R_(j + 1, k) = -s * rj + c * rj1;
      }
      R_(j + 1, j) = Scalar(0);
      rotate_columns(J_, j, j + 1, c, s);
    }
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
  }

  static void rotate_columns(Matrix& M, Eigen::Index a, Eigen::Index b, Scalar c, Scalar s) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      const Scalar ma = M(i, a);
      const Scalar mb = M(i, b);
      M(i, a) = c * ma + s * mb;
      M(i, b) = -s * ma + c * mb;
    }
  }

  void finish(QpSolution<Scalar>& out, QpStatus status, int iterations) const {
    out.z = x_;
    out.lambda.setZero();
    for (std::size_t j = 0; j < active_.size(); ++j) {
      out.lambda(active_[j]) = std::max(Scalar(0), u_[j]);
    }
    out.active_set = active_;
    out.iterations = iterations;
    out.kkt_residual = kkt_residual(qp_, out.z, out.lambda);
    out.status = status;
    if (status == QpStatus::kOptimal && !(out.kkt_residual <= Scalar(settings_.tolerance))) {
      out.status = QpStatus::kMaxIterations;
    }
  }

  const DenseQp<Scalar>& qp_;
  QpSettings settings_;
  Eigen::Index n_;
  Eigen::Index m_;
  Matrix J_;
  Matrix R_;
  Vector x_;
  std::vector<Eigen::Index> active_;
  std::vector<Scalar> u_;
  std::vector<bool> is_active_;
};

}  // namespace detail

/// Solves a strictly convex dense QP. An optimal status is only reported when
/// the returned pair passes kkt_residual() <= settings.tolerance; otherwise the
/// last iterate is returned flagged as max_iterations. `warm_active` lists
/// constraint indices expected to be active and only changes the order in
/// which violated constraints are added.
template <typename Scalar>
QpSolution<Scalar> solve_qp(const DenseQp<Scalar>& qp, const QpSettings& settings = {},
                            std::span<const Eigen::Index> warm_active = {}) {
  if (qp.H.rows() != qp.H.cols() || qp.f.size() != qp.H.rows() ||
      (qp.G.rows() > 0 && qp.G.cols() != qp.H.rows()) || qp.h.size() != qp.G.rows()) {
    throw ConfigError("solve_qp: inconsistent problem dimensions");
  }
  detail::GoldfarbIdnani<Scalar> solver(qp, settings);
  return solver.solve(warm_active);
}

}  // namespace airpath
