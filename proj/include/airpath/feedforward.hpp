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

#include <optional>
#include <string>
#include <vector>

#include "airpath/common.hpp"
#include "airpath/lpv_model.hpp"
#include "airpath/qp.hpp"
#include "airpath/riccati.hpp"

namespace airpath {

enum class FfMode { kNone, kLookupTable, kMpc };

const char* to_string(FfMode mode);
/// Accepts "none", "lut"/"lookup_table" and "mpc"; throws ConfigError otherwise.
FfMode parse_ff_mode(const std::string& token);

/// Steady actuator positions u_ss(rho) interpolated from the grid.
Vec2 lut_ff(const ModelGrid& grid, const OperatingPoint& rho);

/// u_bar_{k-1} = u_{k-1} + ff_now - ff_prev.
inline Vec2 compose(const Vec2& u_prev, const Vec2& ff_prev, const Vec2& ff_now) {
  return u_prev + (ff_now - ff_prev);
}

/// Prediction of the true state under a feedforward change held over the horizon:
/// xbar_j = x_j + (sum_{m<j} A^{j-1-m} B) delta_ff. `x_pred` holds x_{j|k}
/// for j = 0..n; entry 0 is returned unchanged.
std::vector<Vec2> predicted_true_state(const LocalModel& model, const std::vector<Vec2>& x_pred,
                                       const Vec2& delta_ff);

/// Which input advances the internal model of the feedforward MPC.
enum class FfModelInput { kApplied, kFeedforward };

struct FfMpcConfig {
  int horizon = 50;
  Mat2 Q_ff = Vec2(100.0, 2500.0).asDiagonal();
  Mat2 R_ff = Vec2(0.01, 0.01).asDiagonal();
  Vec2 x_min{0.9, 0.0};
  Vec2 x_max{2.7, 0.65};
  Vec2 u_min{0.0, 0.0};
  Vec2 u_max{100.0, 100.0};
  /// Penalize inputs relative to the steady input that holds the target
  /// (kTargetInput) or relative to u_ss(rho) (kSteadyState).
  enum class InputReference { kTargetInput, kSteadyState } input_reference = InputReference::kTargetInput;
  FfModelInput model_input = FfModelInput::kApplied;
  double hessian_regularization = 1e-9;
  QpSettings qp;
  DareSettings dare;

  void validate() const;
};

struct FfMpcResult {
  Vec2 u_ff = Vec2::Zero();
  QpStatus status = QpStatus::kOptimal;
  bool fallback = false;  // true when the look-up value replaced an infeasible QP
  double kkt_residual = 0.0;
  int iterations = 0;
  std::vector<Vec2> x_pred;  // x_{j|k}, j = 0..N (absolute units)
  std::vector<Vec2> u_pred;  // u_{j|k}, j = 0..N-1
};

/// Steady input deviation holding the deviation target r_dev: solves
/// (I - A) r_dev = B u_dev in the least-squares sense.
Vec2 steady_input_for_target(const LocalModel& model, const Vec2& r_dev);

/// Dense QP of the feedforward MPC at one scheduled model, in deviation
/// coordinates about (x_ss, u_ss). Decision vector (u~_0, ..., u~_{N-1}).
DenseQp<double> build_ff_qp(const FfMpcConfig& config, const LocalModel& model, const Mat2& P_terminal,
                            const Vec2& x_dev0, const Vec2& r_dev);

/// Feedforward MPC closed around the LPV model only. The internal model state
/// starts at x_ss(rho_0) and is advanced by advance() every sample.
class FfMpc {
 public:
  FfMpc(FfMpcConfig config, const ModelGrid& grid);

  const FfMpcConfig& config() const { return config_; }
  const Vec2& model_state() const { return x_hat_; }
  bool initialized() const { return initialized_; }

  void reset(const Vec2& x_hat);
  FfMpcResult step(const OperatingPoint& rho, const Vec2& r_k);
  /// Propagates the internal model one sample under input u (per model_input
  /// the caller passes either the applied input or the returned u_ff).
  void advance(const OperatingPoint& rho, const Vec2& u);

 private:
  FfMpcConfig config_;
  const ModelGrid* grid_;
  Vec2 x_hat_ = Vec2::Zero();
  bool initialized_ = false;
  std::vector<Eigen::Index> warm_active_;
};

}  // namespace airpath
