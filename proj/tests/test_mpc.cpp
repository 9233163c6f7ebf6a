// Copyright 2026 The bemctl Authors.
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

#include <chrono>
#include <cmath>
#include <limits>

#include "bemctl/mpc.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using BoxD = bemctl::Box<double>;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bemctl::LTIModel<double> scalar_integrator(double d = 0) {
  return bemctl::make_lti<double>(Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1),
                                  Mat::Constant(1, 1, d), 1.0);
}

bemctl::OCPSpec<double> random_ocp(oracle::Gen& g, int n, int m, int p, int N, double u_bound) {
  auto model = bemctl::make_lti<double>(g.stable(n, 1.1), g.matrix(n, m), g.matrix(p, n),
                                        0.3 * g.matrix(p, m), 1.0);
  const Mat gq = g.matrix(p, p);
  return bemctl::build_ocp<double>(model, N, gq * gq.transpose(), g.spd(m, 0.05),
                                   2 * g.matrix(p, N),
                                   {Vec::Constant(m, -u_bound), Vec::Constant(m, u_bound)},
                                   BoxD::unbounded(p), g.vector(n));
}

// Weighted least squares over the stacked inputs with maps built by simulation.
Vec batch_lq(const bemctl::OCPSpec<double>& ocp) {
  const auto& md = ocp.model;
  const auto [phi, gamma] = oracle::simulate_maps(md.A, md.B, md.C, md.D, ocp.N);
  const auto p = md.p(), m = md.m();
  Mat qbar = Mat::Zero(ocp.N * p, ocp.N * p), qpbar = Mat::Zero(ocp.N * m, ocp.N * m);
  for (int k = 0; k < ocp.N; ++k) {
    qbar.block(k * p, k * p, p, p) = ocp.Q;
    qpbar.block(k * m, k * m, m, m) = ocp.Qp;
  }
  const Vec r = Eigen::Map<const Vec>(ocp.r.data(), ocp.r.size());
  const Mat lhs = phi.transpose() * qbar * phi + qpbar;
  return lhs.ldlt().solve(phi.transpose() * qbar * (r - gamma * ocp.x0));
}

double ocp_cost(const bemctl::OCPSpec<double>& ocp, const Vec& u) {
  const auto& md = ocp.model;
  Vec x = ocp.x0;
  double c = 0;
  for (int k = 0; k < ocp.N; ++k) {
    const Vec uk = u.segment(k * md.m(), md.m());
    const Vec e = md.C * x + md.D * uk - ocp.r.col(k);
    c += e.dot(ocp.Q * e) + uk.dot(ocp.Qp * uk);
    x = md.A * x + md.B * uk;
  }
  return c;
}

}  // namespace

TEST_CASE("case weights build") {
  bemctl::ThermalZoneParams tp;
  const auto thermal = bemctl::build_thermal_model(tp, 900.0);
  auto heat = bemctl::build_ocp<double>(thermal, 24, Mat::Zero(1, 1), Mat::Identity(1, 1),
                                        Mat::Constant(1, 24, 21.0),
                                        {Vec::Zero(1), Vec::Constant(1, 5.0)},
                                        {Vec::Constant(1, 20.0), Vec::Constant(1, 24.0)},
                                        Vec::Constant(1, 21.0));
  CHECK(heat.Q.isZero());
  CHECK(oracle::min_eig(bemctl::condense(heat).qp.H) > 0);
  bemctl::BatteryParams bp;
  const auto batt = bemctl::build_battery_model(bp, 900.0);
  auto track = bemctl::build_ocp<double>(batt, 24, Mat::Identity(1, 1), 1e-4 * Mat::Identity(1, 1),
                                         Mat::Constant(1, 24, 50.0),
                                         {Vec::Constant(1, -20.0), Vec::Constant(1, 20.0)},
                                         BoxD::unbounded(1), Vec::Constant(1, 50.0));
  CHECK(track.Qp(0, 0) == 1e-4);
}

TEST_CASE("build_ocp rejects bad specs") {
  const auto md = scalar_integrator();
  const Mat r = Mat::Zero(1, 3);
  const BoxD ub{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  CHECK_THROWS_AS(bemctl::build_ocp<double>(md, 0, Mat::Ones(1, 1), Mat::Ones(1, 1), r, ub,
                                            BoxD::unbounded(1), Vec::Zero(1)),
                  bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::build_ocp<double>(md, 3, Mat::Ones(1, 1), Mat::Ones(1, 1),
                                            Mat::Zero(1, 2), ub, BoxD::unbounded(1), Vec::Zero(1)),
                  bemctl::DimensionError);
  CHECK_THROWS_AS(bemctl::build_ocp<double>(md, 3, -Mat::Ones(1, 1), Mat::Ones(1, 1), r, ub,
                                            BoxD::unbounded(1), Vec::Zero(1)),
                  bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::build_ocp<double>(md, 3, Mat::Ones(1, 1), Mat::Zero(1, 1), r, ub,
                                            BoxD::unbounded(1), Vec::Zero(1)),
                  bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::build_ocp<double>(md, 3, Mat::Ones(1, 1), Mat::Ones(1, 1), r,
                                            {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)},
                                            BoxD::unbounded(1), Vec::Zero(1)),
                  bemctl::InvalidParameter);
}

TEST_CASE("semidefinite input weight is lifted when jitter is allowed") {
  const auto ocp = bemctl::build_ocp<double>(
      scalar_integrator(), 3, Mat::Ones(1, 1), Mat::Zero(1, 1), Mat::Zero(1, 3),
      BoxD::unbounded(1), BoxD::unbounded(1), Vec::Zero(1), 1e4, true);
  CHECK(ocp.Qp(0, 0) >= bemctl::kMinInputWeightEig);
  CHECK(oracle::min_eig(bemctl::condense(ocp).qp.H) > 0);
}

TEST_CASE("memoryless model gives a lag-one response pattern") {
  oracle::Gen g(9);
  const int n = 2, m = 2, p = 2, N = 5;
  const auto md = bemctl::make_lti<double>(Mat::Zero(n, n), g.matrix(n, m), g.matrix(p, n),
                                           Mat::Zero(p, m), 1.0);
  const auto pm = bemctl::prediction_matrices(md, N);
  const Mat cb = md.C * md.B;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const Mat blk = pm.Phi.block(i * p, j * m, p, m);
      if (i == j + 1) {
        CHECK((blk - cb).cwiseAbs().maxCoeff() <= 1e-14);
      } else {
        CHECK(blk.isZero());
      }
    }
  }
  const auto [phi, gamma] = oracle::simulate_maps(md.A, md.B, md.C, md.D, N);
  CHECK((pm.Phi - phi).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((pm.Gamma - gamma).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("prediction maps match simulation on random models") {
  oracle::Gen g(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(1, 4), m = g.integer(1, 3), p = g.integer(1, 3), N = g.integer(1, 10);
    const auto md = bemctl::make_lti<double>(g.stable(n), g.matrix(n, m), g.matrix(p, n),
                                             g.matrix(p, m), 1.0);
    const auto pm = bemctl::prediction_matrices(md, N);
    const auto [phi, gamma] = oracle::simulate_maps(md.A, md.B, md.C, md.D, N);
    CHECK((pm.Phi - phi).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((pm.Gamma - gamma).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("homogeneous problem has zero linear term") {
  oracle::Gen g(11);
  auto ocp = random_ocp(g, 3, 2, 2, 4, 1.0);
  ocp.x0.setZero();
  ocp.r.setZero();
  const auto c = bemctl::condense(ocp);
  CHECK(c.qp.f.isZero());
  const auto res = bemctl::mpc_step<double>(ocp, Vec::Zero(3), Mat::Zero(2, 4));
  CHECK(res.u0.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("origin is optimal with identity weights") {
  const auto md = bemctl::make_lti<double>(0.5 * Mat::Identity(2, 2), Mat::Identity(2, 2),
                                           Mat::Identity(2, 2), Mat::Zero(2, 2), 1.0);
  const auto ocp = bemctl::build_ocp<double>(md, 6, Mat::Identity(2, 2), Mat::Identity(2, 2),
                                             Mat::Zero(2, 6), {-Vec::Ones(2), Vec::Ones(2)},
                                             {-Vec::Ones(2), Vec::Ones(2)}, Vec::Zero(2));
  const auto res = bemctl::mpc_step<double>(ocp, Vec::Zero(2), Mat::Zero(2, 6));
  REQUIRE(res.sol.status == bemctl::QPStatus::optimal);
  CHECK(res.u0.cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(res.max_slack <= 1e-9);
}

TEST_CASE("one-step closed form on a scalar integrator") {
  const double qp = 1e-9;
  const BoxD ub{Vec::Constant(1, -10.0), Vec::Constant(1, 10.0)};
  // The first output sees the input only through feedthrough, so use D = 1 for
  // a one-step horizon and D = 0 for a two-step one. Both reduce to the same
  // scalar least-squares step.
  {
    const auto ocp = bemctl::build_ocp<double>(scalar_integrator(1.0), 1, Mat::Ones(1, 1),
                                               Mat::Constant(1, 1, qp), Mat::Constant(1, 1, 5.0),
                                               ub, BoxD::unbounded(1), Vec::Zero(1));
    const auto res = bemctl::mpc_step<double>(ocp, Vec::Zero(1), Mat::Constant(1, 1, 5.0));
    CHECK(res.u0(0) == doctest::Approx(5.0 / (1.0 + qp)).epsilon(1e-7));
  }
  {
    const auto ocp = bemctl::build_ocp<double>(scalar_integrator(), 2, Mat::Ones(1, 1),
                                               Mat::Constant(1, 1, qp), Mat::Constant(1, 2, 5.0),
                                               ub, BoxD::unbounded(1), Vec::Zero(1));
    const auto res = bemctl::mpc_step<double>(ocp, Vec::Zero(1), Mat::Constant(1, 2, 5.0));
    const Vec lq = batch_lq(ocp);
    CHECK(lq(0) == doctest::Approx(5.0 / (1.0 + qp)).epsilon(1e-9));
    CHECK(res.u0(0) == doctest::Approx(lq(0)).epsilon(1e-7));
  }
  {
    // With neither feedthrough nor a second step the input is useless.
    const auto ocp = bemctl::build_ocp<double>(scalar_integrator(), 1, Mat::Ones(1, 1),
                                               Mat::Constant(1, 1, qp), Mat::Constant(1, 1, 5.0),
                                               ub, BoxD::unbounded(1), Vec::Zero(1));
    const auto res = bemctl::mpc_step<double>(ocp, Vec::Zero(1), Mat::Constant(1, 1, 5.0));
    CHECK(std::abs(res.u0(0)) <= 1e-6);
  }
}

TEST_CASE("unconstrained step equals batch weighted least squares") {
  oracle::Gen g(12);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const int n = g.integer(1, 4), m = g.integer(1, 2), p = g.integer(1, 2), N = g.integer(1, 8);
    auto ocp = random_ocp(g, n, m, p, N, kInf);
    const Vec lq = batch_lq(ocp);
    const auto res = bemctl::mpc_step<double>(ocp, ocp.x0, ocp.r);
    REQUIRE(res.sol.status == bemctl::QPStatus::optimal);
    const Vec u = res.sol.z_star.head(N * m);
    CHECK((u - lq).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, lq.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("condensed optimum equals the sparse formulation") {
  oracle::Gen g(13);
  for (int trial = 0; trial < 25; ++trial) {
    CAPTURE(trial);
    const int m = trial % 5 == 0 ? 2 : 1;
    const int N = m == 2 ? g.integer(1, 4) : g.integer(1, 8);
    const int n = g.integer(1, 4), p = g.integer(1, 2);
    auto ocp = random_ocp(g, n, m, p, N, 0.5);
    const Vec ref = oracle::sparse_mpc(ocp.model.A, ocp.model.B, ocp.model.C, ocp.model.D, N,
                                       ocp.Q, ocp.Qp, ocp.r, ocp.x0, ocp.u_box.lo, ocp.u_box.hi);
    REQUIRE(ref.size() == N * m);
    const auto res = bemctl::mpc_step<double>(ocp, ocp.x0, ocp.r);
    REQUIRE(res.sol.status == bemctl::QPStatus::optimal);
    const Vec u = res.sol.z_star.head(N * m);
    CHECK((u - ref).cwiseAbs().maxCoeff() <= 1e-6);
    const double c_ref = ocp_cost(ocp, ref);
    CHECK(std::abs(ocp_cost(ocp, u) - c_ref) <= 1e-6 * std::max(1.0, std::abs(c_ref)));
  }
}

TEST_CASE("optimal solutions carry a KKT certificate") {
  oracle::Gen g(14);
  bemctl::QPSettings s;
  for (int trial = 0; trial < 20; ++trial) {
    auto ocp = random_ocp(g, 2, 1, 1, 6, 0.5);
    ocp.y_box = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
    const auto c = bemctl::condense(ocp);
    const auto sol = bemctl::solve_qp(c.qp, s);
    REQUIRE(sol.status == bemctl::QPStatus::optimal);
    const double scale = std::max(1.0, c.qp.f.cwiseAbs().maxCoeff());
    CHECK(bemctl::qp_dual_residual(c.qp, sol.z_star, sol.y_dual) <= s.eps_abs + s.eps_rel * scale);
    CHECK(bemctl::qp_primal_violation(c.qp, sol.z_star) <= s.eps_abs + 1e-9);
  }
}

TEST_CASE("infeasible output box is softened") {
  bemctl::ThermalZoneParams tp;
  const auto md = bemctl::build_thermal_model(tp, 900.0);
  Mat mdl_b = md.B * 1000.0;  // kW input
  const auto model = bemctl::make_lti<double>(md.A, mdl_b, md.C, md.D, 900.0, md.E);
  const auto ocp = bemctl::build_ocp<double>(
      model, 24, Mat::Zero(1, 1), Mat::Identity(1, 1), Mat::Constant(1, 24, 21.0),
      {Vec::Zero(1), Vec::Constant(1, 5.0)}, {Vec::Constant(1, 20.0), Vec::Constant(1, 24.0)},
      Vec::Constant(1, 16.0));  // open window: far below the band
  bemctl::MpcController<double> ctrl(ocp);
  const auto res = ctrl.step(Vec::Constant(1, 16.0), Mat::Constant(1, 24, 21.0),
                             model.E * Mat::Constant(1, 24, 5.0));
  CHECK(res.sol.status == bemctl::QPStatus::optimal);
  CHECK(res.max_slack > 1.0);
  CHECK(res.u0(0) == doctest::Approx(5.0).epsilon(1e-6));  // full heating
  CHECK_FALSE(res.fallback);
}

TEST_CASE("short reference windows hold the last value") {
  oracle::Gen g(15);
  auto ocp = random_ocp(g, 2, 1, 1, 6, 1.0);
  Mat short_r(1, 3);
  short_r << 0.5, 1.0, 1.5;
  Mat full_r(1, 6);
  full_r << 0.5, 1.0, 1.5, 1.5, 1.5, 1.5;
  const auto a = bemctl::mpc_step<double>(ocp, ocp.x0, short_r);
  const auto b = bemctl::mpc_step<double>(ocp, ocp.x0, full_r);
  CHECK(a.sol.z_star == b.sol.z_star);
  CHECK_THROWS_AS(bemctl::mpc_step<double>(ocp, ocp.x0, Mat::Zero(1, 7)), bemctl::DimensionError);
  CHECK_THROWS_AS(bemctl::mpc_step<double>(ocp, Vec::Zero(5), full_r), bemctl::DimensionError);
}

TEST_CASE("predicted trajectory is a forward simulation") {
  oracle::Gen g(16);
  auto ocp = random_ocp(g, 3, 1, 1, 5, 0.7);
  const auto res = bemctl::mpc_step<double>(ocp, ocp.x0, ocp.r);
  REQUIRE(res.predicted.consistent());
  Vec x = ocp.x0;
  for (int k = 0; k < 5; ++k) {
    const Vec u = res.predicted.inputs[static_cast<std::size_t>(k)];
    CHECK(u(0) <= 0.7 + 1e-12);
    CHECK(u(0) >= -0.7 - 1e-12);
    CHECK((res.predicted.outputs[static_cast<std::size_t>(k)] - (ocp.model.C * x + ocp.model.D * u))
              .norm() <= 1e-12);
    x = ocp.model.A * x + ocp.model.B * u;
  }
}

TEST_CASE("non-optimal solve falls back to the last good input") {
  oracle::Gen g(17);
  auto ocp = random_ocp(g, 2, 1, 1, 8, 0.5);
  bemctl::QPSettings tight;
  tight.max_iter = 1;
  tight.polish = false;
  bemctl::MpcController<double> ctrl(ocp, tight);
  const auto first = ctrl.step(ocp.x0, ocp.r);
  CHECK(first.fallback);
  CHECK(first.sol.status == bemctl::QPStatus::max_iter);
  CHECK(std::abs(first.u0(0)) <= 0.5);
}

TEST_CASE("controller steps are deterministic") {
  oracle::Gen g(18);
  auto ocp = random_ocp(g, 3, 1, 2, 10, 0.3);
  bemctl::MpcController<double> a(ocp), b(ocp);
  for (int k = 0; k < 10; ++k) {
    const Vec x = g.vector(3);
    const Mat r = g.matrix(2, 10);
    const auto ra = a.step(x, r);
    const auto rb = b.step(x, r);
    CHECK(ra.sol.iterations == rb.sol.iterations);
    CHECK(ra.sol.z_star == rb.sol.z_star);
  }
}
