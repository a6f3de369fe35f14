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


// Acceptance suite. Prints one PASS/FAIL line per criterion; with
// --criterion N only that criterion runs. Exit status is non-zero when any
// selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "airpath/compare.hpp"
#include "airpath/fb_mpc.hpp"
#include "airpath/feedforward.hpp"
#include "airpath/identification.hpp"
#include "airpath/io.hpp"
#include "airpath/sim.hpp"
#include "qp_oracle.hpp"

namespace airpath {
namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

const ModelGrid& grid() {
  static const ModelGrid g = [] {
    const IdentificationSettings id;
    return build_grid(PlantParams{}, id.mesh(), id.perturbation);
  }();
  return g;
}

const std::vector<PenaltyGrid>& penalties() {
  static const std::vector<PenaltyGrid> p{build_penalty_grid(grid(), default_tracking_weights())};
  return p;
}

FbMpcConfig unconstrained_fb() {
  FbMpcConfig c;
  c.x_min = Vec2::Constant(-1e9);
  c.x_max = Vec2::Constant(1e9);
  c.u_min = Vec2::Constant(-1e9);
  c.u_max = Vec2::Constant(1e9);
  return c;
}

OperatingPoint random_rho(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(600.0, 2400.0), f(5.0, 105.0);
  return {s(rng), f(rng)};
}

unsigned g_jobs = std::max(1u, std::thread::hardware_concurrency());

// 1. Mean-error ordering on the pseudo drive cycle.
Verdict ordering() {
  const RunConfig rc = parse_run_config(R"({"scenario": {"kind": "synthetic_cycle", "cycle_duration": 600}})");
  CompareOptions opt;
  opt.jobs = g_jobs;
  const CompareResult res = run_comparison(rc, grid(), penalties(), opt);
  double slowest = 0.0;
  for (const CompareCell& c : res.cells) {
    if (!c.ok) return {false, "cell " + std::string(to_string(c.mode)) + " seed " + std::to_string(c.seed) + " failed: " + c.error};
    slowest = std::max(slowest, c.wall_seconds);
  }
  const Metrics& fb = res.rows[0].mean;
  const Metrics& lut = res.rows[1].mean;
  const Metrics& mpc = res.rows[2].mean;
  const double red_p = 100.0 * (1.0 - mpc.p_im.mean_abs_error / fb.p_im.mean_abs_error);
  const double red_x = 100.0 * (1.0 - mpc.chi_egr.mean_abs_error / fb.chi_egr.mean_abs_error);
  const bool order_p = mpc.p_im.mean_abs_error <= lut.p_im.mean_abs_error &&
                       lut.p_im.mean_abs_error <= fb.p_im.mean_abs_error;
  const bool order_x = mpc.chi_egr.mean_abs_error <= lut.chi_egr.mean_abs_error &&
                       lut.chi_egr.mean_abs_error <= fb.chi_egr.mean_abs_error;
  const bool pass = order_p && order_x && red_p >= 5.0 && red_x >= 5.0 && slowest < 120.0;
  return {pass, fmt("p_im FB %.6f LUT %.6f MPC %.6f (reduction vs FB %.1f%%); chi_egr FB %.6f LUT %.6f MPC %.6f "
                    "(reduction vs FB %.1f%%); slowest cell %.1f s",
                    fb.p_im.mean_abs_error, lut.p_im.mean_abs_error, mpc.p_im.mean_abs_error, red_p,
                    fb.chi_egr.mean_abs_error, lut.chi_egr.mean_abs_error, mpc.chi_egr.mean_abs_error, red_x,
                    slowest)};
}

// 2. Offset-free tracking on the linear model under a constant state disturbance.
Verdict offset_free() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const FbMpcConfig cfg;
  double worst = 0.0;
  int cases = 0;
  while (cases < 20) {
    const OperatingPoint rho = random_rho(rng);
    const LocalModel m = interpolate_model(grid(), rho);
    const Vec2 d(0.02 * u(rng), 0.005 * u(rng));
    const Vec2 r = m.x_ss + Vec2(0.05 * u(rng), 0.01 * u(rng));
    // Constraints must be inactive at the disturbed steady state.
    const Vec2 u_needed = m.u_ss + m.B.fullPivLu().solve((Mat2::Identity() - m.A) * (r - m.x_ss) - d);
    if ((u_needed.array() < 5.0).any() || (u_needed.array() > 95.0).any()) continue;
    ++cases;
    FbMpc fb(cfg, grid(), penalties());
    Vec2 x = m.x_ss, x_prev = m.x_ss, u_prev = m.u_ss;
    double tail = 0.0;
    for (int k = 0; k < 400; ++k) {
      const FbStepResult s = fb.step(x, x_prev, u_prev, r, rho);
      u_prev = s.u;
      x_prev = x;
      x = step_model(m, x, s.u, rho.fuel_rate) + d;
      if ((k + 1) * 0.02 >= 5.0 - 1e-9) tail = std::max(tail, (x - r).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, tail);
  }
  return {worst < 1e-4, fmt("20 cases, worst |e|inf after 5 s = %.3e", worst)};
}

// 3. x_{k+1} = x_{1|k} + B (ff_k - ff_{k-1}) on the linear model.
Verdict feedforward_identity() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const OperatingPoint rho{1650.0, 48.0};
  const LocalModel m = interpolate_model(grid(), rho);
  const FbMpcConfig cfg = unconstrained_fb();
  const TrackingWeights w = default_tracking_weights();
  const TerminalPenalty P = interpolate_penalty(penalties()[0], rho);
  const Vec2 r = m.x_ss + Vec2(0.03, -0.01);
  Vec2 x = m.x_ss, x_prev = m.x_ss, u_prev = m.u_ss, ff_prev = m.u_ss;
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const Vec2 ff = m.u_ss + Vec2(3.0 * g(rng), 3.0 * g(rng));
    // The prediction is made from the uncomposed previous input.
    const FbQp q = build_qp(cfg, m, P, w, init_extended(x, x_prev, u_prev, r));
    const QpSolution<double> sol = solve_qp(q.qp);
    if (sol.status != QpStatus::kOptimal) return {false, "QP not optimal at step " + std::to_string(k)};
    const Vec2 x1 = q.decoder.decode(sol.z).x[1];
    const Vec2 u = compose(u_prev, ff_prev, ff) + sol.z.head<2>();
    const Vec2 x_next = step_model(m, x, u, rho.fuel_rate);
    worst = std::max(worst, (x_next - (x1 + m.B * (ff - ff_prev))).cwiseAbs().maxCoeff());
    x_prev = x;
    x = x_next;
    u_prev = u;
    ff_prev = ff;
  }
  return {worst <= 1e-12, fmt("500 steps, worst deviation %.3e", worst)};
}

// 4. Unconstrained first move equals the DARE gain at every node.
Verdict lqr_consistency() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  FbMpc fb(unconstrained_fb(), grid(), penalties());
  const TrackingWeights w = default_tracking_weights();
  double worst = 0.0;
  for (std::size_t i = 0; i < grid().mesh().speed().size(); ++i) {
    for (std::size_t j = 0; j < grid().mesh().fuel().size(); ++j) {
      const LocalModel& m = grid().node(i, j);
      const OperatingPoint rho = grid().mesh().node(i, j);
      const Mat4 P = solve_dare<double, 4, 2>(rate_error_dynamics(m.A), rate_error_input(m.B),
                                              [&] {
                                                Mat4 Q = Mat4::Zero();
                                                Q.bottomRightCorner<2, 2>() = w.Q_e;
                                                return Q;
                                              }(),
                                              w.R_ext);
      const auto K = lqr_gain<double, 4, 2>(rate_error_dynamics(m.A), rate_error_input(m.B), w.R_ext, P);
      const Vec2 x_prev = m.x_ss + Vec2(0.005 * g(rng), 0.002 * g(rng));
      const Vec2 x = m.x_ss + Vec2(0.005 * g(rng), 0.002 * g(rng));
      const Vec2 r = m.x_ss + Vec2(0.01 * g(rng), 0.004 * g(rng));
      Vec4 xi;
      xi << x - x_prev, x - r;
      fb.reset_warm_start();
      const FbStepResult s = fb.step(x, x_prev, m.u_ss, r, rho);
      worst = std::max(worst, (s.delta_u + K * xi).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-6, fmt("99 nodes, worst |du - (-K xi)| = %.3e", worst)};
}

// 5. Dual active-set solver against exhaustive enumeration.
Verdict qp_oracle() {
  std::mt19937_64 rng(5);
  double worst_primal = 0.0, worst_kkt = 0.0;
  int non_optimal = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int m = static_cast<int>(rng() % 7);
    const DenseQp<double> qp = testing::random_qp(rng, n, m);
    const auto ref = testing::brute_force(qp);
    const QpSolution<double> sol = solve_qp(qp);
    if (!ref || sol.status != QpStatus::kOptimal) {
      ++non_optimal;
      continue;
    }
    worst_primal = std::max(worst_primal, (sol.z - *ref).cwiseAbs().maxCoeff());
    // Independent KKT re-check.
    Eigen::VectorXd grad = qp.H * sol.z + qp.f;
    double kkt = 0.0;
    if (m > 0) {
      grad += qp.G.transpose() * sol.lambda;
      const Eigen::VectorXd slack = qp.G * sol.z - qp.h;
      kkt = std::max({kkt, slack.maxCoeff(), -sol.lambda.minCoeff(),
                      (sol.lambda.array() * slack.array()).abs().maxCoeff()});
    }
    kkt = std::max(kkt, grad.cwiseAbs().maxCoeff());
    worst_kkt = std::max(worst_kkt, kkt);
  }
  return {non_optimal == 0 && worst_primal <= 1e-7 && worst_kkt <= 1e-8,
          fmt("1000 QPs, %d not optimal, worst primal gap %.3e, worst KKT %.3e", non_optimal, worst_primal,
              worst_kkt)};
}

template <int N, int M>
double substitution_residual(const Eigen::Matrix<double, N, N>& A, const Eigen::Matrix<double, N, M>& B,
                             const Eigen::Matrix<double, N, N>& Q, const Eigen::Matrix<double, M, M>& R,
                             const Eigen::Matrix<double, N, N>& P) {
  const Eigen::Matrix<double, M, M> S = R + B.transpose() * P * B;
  const Eigen::Matrix<double, N, N> rhs =
      A.transpose() * P * A - A.transpose() * P * B * S.inverse() * B.transpose() * P * A + Q;
  return (P - rhs).norm();
}

// 6. DARE residuals: scalar closed form plus every solve the controllers use.
Verdict dare_residuals() {
  using M1 = Eigen::Matrix<double, 1, 1>;
  DareSettings tight;
  tight.tolerance = 1e-14;
  const M1 p = solve_dare<double, 1, 1>(M1::Constant(0.5), M1::Constant(1.0), M1::Constant(1.0),
                                        M1::Constant(1.0), tight);
  // p^2 - 0.25 p - 1 = 0 after clearing the denominator.
  const double closed = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
  const double scalar_err = std::abs(p(0, 0) - closed);

  const TrackingWeights w = default_tracking_weights();
  Mat4 Qe = Mat4::Zero();
  Qe.bottomRightCorner<2, 2>() = w.Q_e;
  const FfMpcConfig ff;
  double worst = 0.0;
  for (const LocalModel& m : grid().nodes()) {
    const Mat4 P = fb_terminal_penalty(m, w).reduced;
    worst = std::max(worst, substitution_residual<4, 2>(rate_error_dynamics(m.A), rate_error_input(m.B), Qe, w.R_ext, P));
    const Mat2 Pf = solve_dare<double, 2, 2>(m.A, m.B, ff.Q_ff, ff.R_ff, ff.dare);
    worst = std::max(worst, substitution_residual<2, 2>(m.A, m.B, ff.Q_ff, ff.R_ff, Pf));
  }
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Mat4 A = Mat4::NullaryExpr([&] { return u(rng); });
    A *= 0.95 / A.eigenvalues().cwiseAbs().maxCoeff();
    const Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::NullaryExpr([&] { return u(rng); });
    const Mat4 L = Mat4::NullaryExpr([&] { return u(rng); });
    const Mat4 Q = L * L.transpose();
    const Mat2 R = Mat2::Identity();
    worst = std::max(worst, substitution_residual<4, 2>(A, B, Q, R, solve_dare<double, 4, 2>(A, B, Q, R)));
  }
  return {scalar_err <= 1e-12 && worst <= 1e-9,
          fmt("scalar error %.3e; worst residual %.3e over 99 feedback, 99 feedforward and 100 random solves",
              scalar_err, worst)};
}

// 7. Extended-state model reproduces differences and errors of the deviation model.
Verdict augmented_equivalence() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const LocalModel& m = grid().nodes()[rng() % grid().nodes().size()];
    const Vec2 r = m.x_ss + Vec2(0.05 * g(rng), 0.01 * g(rng));
    const Vec2 x_prev = m.x_ss + Vec2(0.01 * g(rng), 0.005 * g(rng));
    Vec2 u_prev = m.u_ss + Vec2(g(rng), g(rng));
    Vec2 x = step_model(m, x_prev, u_prev, m.w_inj_ss);
    Vec8 xi = init_extended(x, x_prev, u_prev, r).stacked();
    const Mat8 F = extended_dynamics(m.A);
    const auto G = extended_input(m.B);
    for (int k = 0; k < 200; ++k) {
      const Vec2 du(g(rng), g(rng));
      const Vec2 u = u_prev + du;
      const Vec2 x_next = step_model(m, x, u, m.w_inj_ss);
      xi = (F * xi + G * du).eval();
      worst = std::max(worst, (xi.segment<2>(0) - (x_next - x)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (xi.segment<2>(2) - (x_next - r)).cwiseAbs().maxCoeff());
      x = x_next;
      u_prev = u;
    }
  }
  return {worst <= 1e-12, fmt("20 nodes x 200 steps, worst deviation %.3e", worst)};
}

// 8. Targets decoupled from the look-up table during a fuel step.
Verdict mismatch() {
  const SetpointMap map = SetpointMap::from_grid(grid());
  ScenarioParams p;  // 1500 rpm, 20 -> 50 -> 20 mg/stroke
  const Scenario s = make_scenario(ScenarioKind::kTargetOverride, p, 1, &map);
  auto excursion = [&](FfMode mode) {
    SimConfig c;
    c.ff_mode = mode;
    const SimTrace t = run_closed_loop(c, grid(), map, s, 1, &penalties());
    double peak = 0.0;
    for (const TraceRow& row : t.rows) {
      if (row.t >= p.step_time) peak = std::max(peak, std::abs(row.x(0) - row.r(0)));
    }
    return peak;
  };
  const double lut = excursion(FfMode::kLookupTable);
  const double mpc = excursion(FfMode::kMpc);
  return {lut >= 1.2 * mpc, fmt("peak p_im excursion from the held target: LUT %.5f bar, FF MPC %.5f bar (ratio %.2f)",
                                lut, mpc, lut / mpc)};
}

// 9. Constant operating point: look-up feedforward changes nothing.
Verdict degenerate_feedforward() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const SetpointMap map = SetpointMap::from_grid(grid());
  double worst = 0.0;
  for (int c = 0; c < 5; ++c) {
    const OperatingPoint rho = random_rho(rng);
    ScenarioParams p;
    p.speed = rho.engine_speed;
    p.fuel_low = p.fuel_high = rho.fuel_rate;
    p.duration = 6.0;
    Scenario s = make_scenario(ScenarioKind::kFuelStep, p, 1);
    s.targets.assign(s.size(), map.at(rho) + Vec2(0.03 * u(rng), 0.01 * u(rng)));
    SimConfig cfg;
    const SimTrace a = run_closed_loop(cfg, grid(), map, s, 1, &penalties());
    cfg.ff_mode = FfMode::kLookupTable;
    const SimTrace b = run_closed_loop(cfg, grid(), map, s, 1, &penalties());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
      worst = std::max(worst, (a.rows[k].u - b.rows[k].u).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.rows[k].x - b.rows[k].x).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-9, fmt("5 operating points, worst trace difference %.3e", worst)};
}

// 10. Identification: exact recovery and the full surrogate grid.
Verdict identification() {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_recovery = 0.0;
  for (int t = 0; t < 20; ++t) {
    LocalModel truth;
    Mat2 A = Mat2::NullaryExpr([&] { return g(rng); });
    truth.A = A * (0.9 / spectral_radius(A));
    truth.B = Mat2::NullaryExpr([&] { return 0.01 * g(rng); });
    truth.Bf = Vec2(0.002 * g(rng), 0.001 * g(rng));
    truth.x_ss = Vec2(1.4, 0.2);
    truth.u_ss = Vec2(45.0, 55.0);
    truth.w_inj_ss = 40.0;
    IoRecord rec;
    Vec2 x = truth.x_ss;
    for (int k = 0; k < 500; ++k) {
      const Vec2 u = truth.u_ss + Vec2(2.0 * g(rng), 2.0 * g(rng));
      const double w = truth.w_inj_ss + g(rng);
      rec.x.push_back(x);
      rec.u.push_back(u);
      rec.w_inj.push_back(w);
      x = step_model(truth, x, u, w);
    }
    const LocalModel fit = fit_local_model(rec, {truth.x_ss, truth.u_ss, truth.w_inj_ss}).model;
    worst_recovery = std::max({worst_recovery, (fit.A - truth.A).cwiseAbs().maxCoeff(),
                               (fit.B - truth.B).cwiseAbs().maxCoeff(), (fit.Bf - truth.Bf).cwiseAbs().maxCoeff()});
  }

  const IdentificationSettings id;
  std::vector<FitReport> reports;
  build_grid(PlantParams{}, id.mesh(), id.perturbation, &reports);
  double worst_radius = 0.0, worst_rel = 0.0;
  for (const FitReport& r : reports) {
    worst_radius = std::max(worst_radius, r.spectral_radius);
    worst_rel = std::max(worst_rel, r.residual_rms.cwiseQuotient(r.signal_range).maxCoeff());
  }
  return {worst_recovery <= 1e-8 && reports.size() == 99 && worst_radius < 1.0 && worst_rel < 0.01,
          fmt("recovery error %.3e; %zu nodes, max spectral radius %.4f, worst residual %.3f%% of range",
              worst_recovery, reports.size(), worst_radius, 100.0 * worst_rel)};
}

// 11. Median wall time of one feedback step at N = 50.
Verdict performance() {
  const SetpointMap map = SetpointMap::from_grid(grid());
  FbMpc fb(FbMpcConfig{}, grid(), penalties());
  ScenarioParams p;
  const Scenario s = make_scenario(ScenarioKind::kFuelStep, p, 1);
  const PlantParams plant;
  Vec2 u = lut_ff(grid(), s.rho.front());
  PlantState x = plant_steady_state(plant, s.rho.front(), u);
  Vec2 x_prev = x.vec();
  std::vector<double> ms;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const FbStepResult r = fb.step(x.vec(), x_prev, u, map.at(s.rho[k]), s.rho[k]);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    u = r.u;
    x_prev = x.vec();
    x = plant_step(plant, x, s.rho[k], u, s.sample_period);
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
  const double median = ms[ms.size() / 2];
  return {median < 20.0, fmt("%zu steps (102 QP variables), median %.3f ms", ms.size(), median)};
}

}  // namespace
}  // namespace airpath

int main(int argc, char** argv) {
  using airpath::Verdict;
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"mean-error ordering on the pseudo drive cycle", airpath::ordering},
      {"offset-free tracking", airpath::offset_free},
      {"feedforward effect identity", airpath::feedforward_identity},
      {"LQR / DARE consistency", airpath::lqr_consistency},
      {"QP oracle equivalence", airpath::qp_oracle},
      {"DARE residual", airpath::dare_residuals},
      {"augmented-model equivalence", airpath::augmented_equivalence},
      {"mismatch experiment", airpath::mismatch},
      {"degenerate feedforward equivalence", airpath::degenerate_feedforward},
      {"identification recovery", airpath::identification},
      {"feedback step performance", airpath::performance},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--jobs") == 0 && i + 1 < argc) {
      airpath::g_jobs = static_cast<unsigned>(std::max(1, std::atoi(argv[++i])));
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N] [--jobs N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "criterion must lie in 1..%zu\n", criteria.size());
    return 2;
  }
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only != 0 && static_cast<int>(k) + 1 != only) continue;
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2zu %s: %s  %s\n", k + 1, v.pass ? "PASS" : "FAIL", criteria[k].first, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
