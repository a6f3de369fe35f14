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
#include <optional>
#include <string>
#include <vector>

#include "airpath/common.hpp"
#include "airpath/lpv_model.hpp"
#include "airpath/qp.hpp"
#include "airpath/terminal_penalty.hpp"

namespace airpath {

/// Half-open interval [lo, hi).
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= lo && v < hi; }
  bool unbounded() const { return std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0; }
};

struct Region {
  std::string name;
  Interval speed;
  Interval fuel;
  Interval chi_egr;
  TrackingWeights weights;

  bool contains(double engine_speed, double fuel_rate, double chi_egr_value) const {
    return speed.contains(engine_speed) && fuel.contains(fuel_rate) && chi_egr.contains(chi_egr_value);
  }
};

/// Ordered weight-scheduling regions over (N_e, w_inj, chi_egr). The last
/// region is the catch-all; the others must not overlap.
class RegionTable {
 public:
  RegionTable() = default;
  explicit RegionTable(std::vector<Region> regions);

  const std::vector<Region>& regions() const { return regions_; }
  std::size_t select(double engine_speed, double fuel_rate, double chi_egr) const;
  /// Distinct weight pairs in order of first appearance.
  std::vector<TrackingWeights> distinct_weights() const;

 private:
  std::vector<Region> regions_;
};

/// Q_e = diag(100, 2500), R_ext = diag(0.01, 0.01).
TrackingWeights default_tracking_weights();

/// Seven regions (low/high speed, fuel and EGR rate) that all carry `weights`.
RegionTable default_region_table(const TrackingWeights& weights = default_tracking_weights());

/// Index of the first region containing the point; the catch-all guarantees a match.
std::size_t select_region(const RegionTable& table, double engine_speed, double fuel_rate,
                          double chi_egr);

enum class PenaltySource { kInterpolatedGrid, kOnlineDare };

struct FbMpcConfig {
  int horizon = 50;
  double sample_period = 0.020;
  RegionTable regions = default_region_table();
  double slack_weight = 1e6;
  Vec2 x_min{0.9, 0.0};
  Vec2 x_max{2.7, 0.65};
  Vec2 u_min{0.0, 0.0};
  Vec2 u_max{100.0, 100.0};
  PenaltySource penalty_source = PenaltySource::kInterpolatedGrid;
  /// Impose state bounds on the prediction shifted by the feedforward change.
  bool tighten_for_feedforward = false;
  double hessian_regularization = 1e-9;
  QpSettings qp;
  DareSettings dare;

  void validate() const;
};

/// [dx; e; x_prev; u_prev] of the rate-based prediction.
struct ExtendedState {
  Vec2 delta_x = Vec2::Zero();
  Vec2 e = Vec2::Zero();
  Vec2 x_prev = Vec2::Zero();
  Vec2 u_prev = Vec2::Zero();

  Vec8 stacked() const {
    Vec8 v;
    v << delta_x, e, x_prev, u_prev;
    return v;
  }
  static ExtendedState from(const Vec8& v) {
    return {v.segment<2>(0), v.segment<2>(2), v.segment<2>(4), v.segment<2>(6)};
  }
};

ExtendedState init_extended(const Vec2& x_k, const Vec2& x_prev, const Vec2& u_bar_prev,
                            const Vec2& r_k);

/// Augmented transition of the rate-based model.
Mat8 extended_dynamics(const Mat2& A);
Eigen::Matrix<double, 8, 2> extended_input(const Mat2& B);

/// Predicted trajectories recovered from a decision vector.
struct FbTrajectory {
  std::vector<ExtendedState> ext;  // j = 0..N
  std::vector<Vec2> x;             // x_{j|k}, j = 0..N
  std::vector<Vec2> u;             // u_{j|k}, j = 0..N-1
  std::vector<Vec2> delta_u;       // j = 0..N-1
  Vec2 slack = Vec2::Zero();
};

class FbDecoder {
 public:
  FbDecoder() = default;
  FbDecoder(const LocalModel& model, const ExtendedState& ext0, int horizon);
  FbTrajectory decode(const VectorXd& z) const;

 private:
  Mat8 A_ext_ = Mat8::Zero();
  Eigen::Matrix<double, 8, 2> B_ext_ = Eigen::Matrix<double, 8, 2>::Zero();
  ExtendedState ext0_;
  int horizon_ = 0;
};

struct FbQp {
  DenseQp<double> qp;
  FbDecoder decoder;
};

/// Condensed rate-based QP over z = (du_0, ..., du_{N-1}, eps). Rows of G are
/// ordered: state upper bounds, state lower bounds (j = 1..N), input upper
/// bounds, input lower bounds (j = 0..N-1), slack non-negativity.
/// `feedforward_delta` shifts the state bounds when tightening is enabled.
FbQp build_qp(const FbMpcConfig& config, const LocalModel& model, const TerminalPenalty& penalty,
              const TrackingWeights& weights, const ExtendedState& ext0,
              const Vec2& feedforward_delta = Vec2::Zero());

struct FbDiagnostics {
  QpStatus status = QpStatus::kOptimal;
  double kkt_residual = 0.0;
  int iterations = 0;
  Vec2 slack = Vec2::Zero();
  std::size_t region = 0;
};

struct FbStepResult {
  Vec2 delta_u = Vec2::Zero();
  Vec2 u = Vec2::Zero();
  FbDiagnostics diagnostics;
};

/// Rate-based feedback MPC scheduled on a model grid. Holds the per-region
/// terminal-penalty grids and the previous active set for warm starting.
class FbMpc {
 public:
  FbMpc(FbMpcConfig config, const ModelGrid& grid);
  /// Reuses precomputed penalties (must match the grid mesh and one region's weights).
  FbMpc(FbMpcConfig config, const ModelGrid& grid, std::vector<PenaltyGrid> penalties);

  const FbMpcConfig& config() const { return config_; }
  const ModelGrid& grid() const { return *grid_; }
  const std::vector<PenaltyGrid>& penalty_grids() const { return penalties_; }

  TerminalPenalty penalty_at(const LocalModel& model, const OperatingPoint& rho,
                             const TrackingWeights& weights) const;

  /// One control update: u_k = u_bar_prev + du*_{0|k}, saturated to the input bounds.
  FbStepResult step(const Vec2& x_k, const Vec2& x_prev, const Vec2& u_bar_prev, const Vec2& r_k,
                    const OperatingPoint& rho, const Vec2& feedforward_delta = Vec2::Zero());

  void reset_warm_start() { warm_active_.clear(); }

 private:
  FbMpcConfig config_;
  const ModelGrid* grid_;
  std::vector<PenaltyGrid> penalties_;
  std::vector<Eigen::Index> warm_active_;
};

}  // namespace airpath
