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

#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace airpath {
namespace {

using airpath::testing::random_mat2;
using airpath::testing::random_stable;

LocalModel node_model(double tag) {
  LocalModel m;
  m.A << 0.5 + tag, 0.1, -0.2, 0.3 * tag;
  m.B << tag, 2.0, -1.0, 0.5 * tag;
  m.Bf << 0.01 * tag, -0.02;
  m.x_ss << 1.0 + tag, 0.1 * tag;
  m.u_ss << 30.0 + tag, 50.0 - tag;
  m.w_inj_ss = 10.0 * tag;
  return m;
}

ModelGrid tagged_grid() {
  Mesh mesh({1000.0, 1500.0, 2000.0}, {10.0, 30.0});
  std::vector<LocalModel> nodes;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) nodes.push_back(node_model(static_cast<double>(i) + 0.25 * j));
  }
  return ModelGrid(mesh, nodes);
}

void expect_model_near(const LocalModel& a, const LocalModel& b, double tol) {
  EXPECT_LE((a.A - b.A).cwiseAbs().maxCoeff(), tol);
  EXPECT_LE((a.B - b.B).cwiseAbs().maxCoeff(), tol);
  EXPECT_LE((a.Bf - b.Bf).cwiseAbs().maxCoeff(), tol);
  EXPECT_LE((a.x_ss - b.x_ss).cwiseAbs().maxCoeff(), tol);
  EXPECT_LE((a.u_ss - b.u_ss).cwiseAbs().maxCoeff(), tol);
  EXPECT_NEAR(a.w_inj_ss, b.w_inj_ss, tol);
}

TEST(Mesh, DefaultMeshShape) {
  const Mesh m = default_mesh();
  ASSERT_EQ(m.speed().size(), 9u);
  ASSERT_EQ(m.fuel().size(), 11u);
  EXPECT_DOUBLE_EQ(m.speed().front(), 600.0);
  EXPECT_DOUBLE_EQ(m.speed().back(), 2400.0);
  EXPECT_DOUBLE_EQ(m.fuel().front(), 5.0);
  EXPECT_DOUBLE_EQ(m.fuel().back(), 105.0);
  EXPECT_EQ(m.size(), 99u);
}

TEST(Mesh, RejectsBadBreakpoints) {
  EXPECT_THROW(Mesh({1000.0}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(Mesh({1000.0, 900.0}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(Mesh({1000.0, 1000.0}, {1.0, 2.0}), ConfigError);
}

TEST(ModelGrid, RejectsWrongNodeCount) {
  Mesh mesh({1000.0, 1500.0}, {10.0, 30.0});
  EXPECT_THROW(ModelGrid(mesh, std::vector<LocalModel>(3)), ConfigError);
}

TEST(Interpolation, NodesAreReturnedVerbatim) {
  const ModelGrid grid = tagged_grid();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      expect_model_near(interpolate_model(grid, grid.mesh().node(i, j)), grid.node(i, j), 0.0);
    }
  }
}

TEST(Interpolation, SpeedMidpointIsAverage) {
  const ModelGrid grid = tagged_grid();
  const LocalModel mid = interpolate_model(grid, {1250.0, 30.0});
  const LocalModel& a = grid.node(0, 1);
  const LocalModel& b = grid.node(1, 1);
  LocalModel expected;
  expected.A = 0.5 * (a.A + b.A);
  expected.B = 0.5 * (a.B + b.B);
  expected.Bf = 0.5 * (a.Bf + b.Bf);
  expected.x_ss = 0.5 * (a.x_ss + b.x_ss);
  expected.u_ss = 0.5 * (a.u_ss + b.u_ss);
  expected.w_inj_ss = 0.5 * (a.w_inj_ss + b.w_inj_ss);
  expect_model_near(mid, expected, 1e-14);
}

TEST(Interpolation, CellCentreIsMeanOfCorners) {
  const ModelGrid grid = tagged_grid();
  const LocalModel c = interpolate_model(grid, {1750.0, 20.0});
  const Mat2 expected =
      0.25 * (grid.node(1, 0).A + grid.node(1, 1).A + grid.node(2, 0).A + grid.node(2, 1).A);
  EXPECT_LE((c.A - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Interpolation, ClampsOutsideHull) {
  const ModelGrid grid = tagged_grid();
  expect_model_near(interpolate_model(grid, {500.0, 20.0}), interpolate_model(grid, {1000.0, 20.0}), 0.0);
  expect_model_near(interpolate_model(grid, {2500.0, 40.0}), grid.node(2, 1), 0.0);
  expect_model_near(interpolate_model(grid, {1500.0, 0.0}), grid.node(1, 0), 0.0);
}

TEST(StepModel, EquilibriumIsFixedPoint) {
  const LocalModel m = node_model(0.7);
  EXPECT_LE((step_model(m, m.x_ss, m.u_ss, m.w_inj_ss) - m.x_ss).norm(), 1e-15);
}

TEST(StepModel, PureInputPassThrough) {
  LocalModel m;
  m.B = Mat2::Identity();
  m.x_ss << 1.2, 0.1;
  m.u_ss << 40.0, 60.0;
  const Vec2 delta(0.3, -0.7);
  const Vec2 x = step_model(m, Vec2(5.0, -3.0), m.u_ss + delta, 17.0);
  EXPECT_LE((x - (m.x_ss + delta)).norm(), 1e-14);
}

TEST(StepModel, IdentifiedNodeMatchesHandEvaluation) {
  const LocalModel& m = airpath::testing::default_grid().node(4, 5);
  const Vec2 x = m.x_ss + Vec2(0.1, 0.0);
  const Vec2 got = step_model(m, x, m.u_ss, m.w_inj_ss);
  // x+ = x_ss + A (0.1, 0), written out entry by entry.
  EXPECT_NEAR(got(0), m.x_ss(0) + m.A(0, 0) * 0.1, 1e-15);
  EXPECT_NEAR(got(1), m.x_ss(1) + m.A(1, 0) * 0.1, 1e-15);
}

IoRecord simulate(const LocalModel& m, std::size_t n, std::mt19937_64& rng, bool excite_u = true) {
  std::normal_distribution<double> g(0.0, 1.0);
  IoRecord rec;
  Vec2 x = m.x_ss + Vec2(0.05, 0.01);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 u = excite_u ? Vec2(m.u_ss + Vec2(g(rng), g(rng))) : m.u_ss;
    const double w = m.w_inj_ss + g(rng);
    rec.x.push_back(x);
    rec.u.push_back(u);
    rec.w_inj.push_back(w);
    x = step_model(m, x, u, w);
  }
  return rec;
}

TEST(Fit, RecoversGeneratingModel) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    LocalModel truth;
    truth.A = random_stable(rng, 0.9);
    truth.B = random_mat2(rng, 0.05);
    truth.Bf = Vec2(0.003, -0.001) * (trial + 1);
    truth.x_ss << 1.3, 0.15;
    truth.u_ss << 40.0, 55.0;
    truth.w_inj_ss = 30.0;
    const IoRecord rec = simulate(truth, 400, rng);
    const FitReport fit = fit_local_model(rec, {truth.x_ss, truth.u_ss, truth.w_inj_ss});
    EXPECT_LE((fit.model.A - truth.A).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((fit.model.B - truth.B).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((fit.model.Bf - truth.Bf).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(fit.residual_rms.maxCoeff(), 1e-10);
  }
}

TEST(Fit, ConstantInputIsRankDeficient) {
  std::mt19937_64 rng(5);
  LocalModel truth = node_model(0.2);
  truth.A = random_stable(rng, 0.8);
  const IoRecord rec = simulate(truth, 200, rng, /*excite_u=*/false);
  try {
    fit_local_model(rec, {truth.x_ss, truth.u_ss, truth.w_inj_ss});
    FAIL() << "expected IdentificationError";
  } catch (const IdentificationError& e) {
    EXPECT_NE(std::string(e.what()).find("rank-deficient"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("u_egr"), std::string::npos) << e.what();
  }
}

TEST(Fit, CollinearInputsNameADirection) {
  std::mt19937_64 rng(6);
  LocalModel truth = node_model(0.2);
  truth.A = random_stable(rng, 0.8);
  IoRecord rec = simulate(truth, 200, rng);
  for (Vec2& u : rec.u) u(1) = truth.u_ss(1) + 2.0 * (u(0) - truth.u_ss(0));
  EXPECT_THROW(fit_local_model(rec, {truth.x_ss, truth.u_ss, truth.w_inj_ss}), IdentificationError);
}

TEST(Fit, RejectsUnstableFit) {
  std::mt19937_64 rng(8);
  LocalModel truth = node_model(0.2);
  truth.A = random_stable(rng, 1.02);
  truth.B = random_mat2(rng, 0.001);
  const IoRecord rec = simulate(truth, 60, rng);
  try {
    fit_local_model(rec, {truth.x_ss, truth.u_ss, truth.w_inj_ss});
    FAIL() << "expected IdentificationError";
  } catch (const IdentificationError& e) {
    EXPECT_NE(std::string(e.what()).find("not stable"), std::string::npos) << e.what();
  }
}

TEST(Fit, RejectsShortOrMismatchedData) {
  IoRecord rec;
  rec.x.assign(5, Vec2::Zero());
  rec.u.assign(5, Vec2::Zero());
  rec.w_inj.assign(5, 0.0);
  EXPECT_THROW(fit_local_model(rec, {}), IdentificationError);
  rec.u.pop_back();
  EXPECT_THROW(fit_local_model(rec, {}), IdentificationError);
}

TEST(SpectralRadius, ComplexPair) {
  Mat2 A;
  A << 0.0, -0.5, 0.5, 0.0;
  EXPECT_NEAR(spectral_radius(A), 0.5, 1e-15);
}

}  // namespace
}  // namespace airpath
