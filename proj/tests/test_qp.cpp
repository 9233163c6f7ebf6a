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

#include <cmath>
#include <limits>

#include "bemctl/qp.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

bemctl::QPProblem<double> box_qp(const Mat& h, const Vec& f, const Vec& lo, const Vec& hi) {
  return {h, f, Mat::Identity(h.rows(), h.rows()), lo, hi};
}

}  // namespace

TEST_CASE("unconstrained quadratic") {
  const Vec c{{1.5, -2.0, 0.25}};
  const double inf = std::numeric_limits<double>::infinity();
  const auto qp = box_qp(Mat::Identity(3, 3), -c, Vec::Constant(3, -inf), Vec::Constant(3, inf));
  const auto sol = bemctl::solve_qp(qp);
  REQUIRE(sol.status == bemctl::QPStatus::optimal);
  CHECK((sol.z_star - c).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("clipped minimizer") {
  const auto qp = box_qp(Mat::Identity(4, 4), Vec::Constant(4, -2.0), Vec::Zero(4), Vec::Ones(4));
  const auto sol = bemctl::solve_qp(qp);
  REQUIRE(sol.status == bemctl::QPStatus::optimal);
  CHECK((sol.z_star - Vec::Ones(4)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("crossed bounds are infeasible") {
  Vec lo = Vec::Zero(2), hi = Vec::Ones(2);
  lo(1) = 2;
  const auto sol = bemctl::solve_qp(box_qp(Mat::Identity(2, 2), Vec::Zero(2), lo, hi));
  CHECK(sol.status == bemctl::QPStatus::infeasible);
}

TEST_CASE("iteration cap reports max_iter") {
  oracle::Gen g(3);
  const Mat h = g.spd(20, 1e-3);
  bemctl::QPSettings s;
  s.max_iter = 1;
  s.polish = false;
  const auto sol =
      bemctl::solve_qp(box_qp(h, 10 * g.vector(20), -Vec::Ones(20), Vec::Ones(20)), s);
  CHECK(sol.status == bemctl::QPStatus::max_iter);
  CHECK(sol.z_star.size() == 20);
}

TEST_CASE("random box QPs agree with projected gradient") {
  oracle::Gen g(2026);
  for (int trial = 0; trial < 50; ++trial) {
    CAPTURE(trial);
    const int n = g.integer(1, 30);
    const Mat h = g.spd(n, 0.05);
    const Vec f = 3 * g.vector(n);
    Vec lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      lo(i) = g.uniform(-2, 0);
      hi(i) = lo(i) + g.uniform(0.1, 2);
    }
    const auto qp = box_qp(h, f, lo, hi);
    const auto sol = bemctl::solve_qp(qp);
    REQUIRE(sol.status == bemctl::QPStatus::optimal);
    const Vec ref = oracle::projected_gradient(h, f, lo, hi);
    const double obj = bemctl::qp_objective(qp, sol.z_star);
    const double obj_ref = bemctl::qp_objective(qp, ref);
    CHECK(std::abs(obj - obj_ref) <= 1e-6 * std::max(1.0, std::abs(obj_ref)));
    // KKT certificate.
    CHECK(bemctl::qp_dual_residual(qp, sol.z_star, sol.y_dual) <= 1e-6 * std::max(1.0, f.norm()));
    CHECK(bemctl::qp_primal_violation(qp, sol.z_star) <= 1e-6);
  }
}

TEST_CASE("general constraint rows satisfy KKT") {
  oracle::Gen g(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(2, 12), m = g.integer(1, 15);
    const Mat h = g.spd(n, 0.1);
    const Vec f = g.vector(n);
    const Mat a = g.matrix(m, n);
    Vec lo(m), hi(m);
    for (int i = 0; i < m; ++i) {
      lo(i) = g.uniform(-1.5, -0.1);
      hi(i) = g.uniform(0.1, 1.5);
    }
    const bemctl::QPProblem<double> qp{h, f, a, lo, hi};
    const auto sol = bemctl::solve_qp(qp);
    REQUIRE(sol.status == bemctl::QPStatus::optimal);
    CHECK(bemctl::qp_dual_residual(qp, sol.z_star, sol.y_dual) <= 1e-6 * std::max(1.0, f.norm()));
    CHECK(bemctl::qp_primal_violation(qp, sol.z_star) <= 1e-6);
    // Complementarity: a multiplier only where its bound is active.
    const Vec az = a * sol.z_star;
    for (int i = 0; i < m; ++i) {
      if (sol.y_dual(i) > 1e-6) CHECK(az(i) >= hi(i) - 1e-5);
      if (sol.y_dual(i) < -1e-6) CHECK(az(i) <= lo(i) + 1e-5);
    }
  }
}

TEST_CASE("identical inputs give bit-identical solutions") {
  oracle::Gen g(5);
  const Mat h = g.spd(15, 0.01);
  const Vec f = 5 * g.vector(15);
  const auto qp = box_qp(h, f, -Vec::Ones(15), Vec::Ones(15));
  const auto a = bemctl::solve_qp(qp);
  const auto b = bemctl::solve_qp(qp);
  CHECK(a.iterations == b.iterations);
  CHECK(a.z_star == b.z_star);
  CHECK(a.y_dual == b.y_dual);
}

TEST_CASE("warm start and vector updates") {
  oracle::Gen g(6);
  const Mat h = g.spd(10, 0.1);
  auto qp = box_qp(h, g.vector(10), -Vec::Ones(10), Vec::Ones(10));
  bemctl::QPSolver<double> solver(qp);
  const auto first = solver.solve();
  REQUIRE(first.status == bemctl::QPStatus::optimal);
  const auto warm = solver.solve(&first.z_star, &first.y_dual);
  CHECK(warm.status == bemctl::QPStatus::optimal);
  CHECK(warm.iterations <= first.iterations);
  const Vec f2 = g.vector(10);
  solver.update_vectors(f2, -Vec::Ones(10), Vec::Ones(10));
  const auto second = solver.solve();
  const Vec ref = oracle::projected_gradient(h, f2, -Vec::Ones(10), Vec::Ones(10));
  CHECK((second.z_star - ref).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK_THROWS_AS(solver.update_vectors(Vec::Zero(3), -Vec::Ones(10), Vec::Ones(10)),
                  bemctl::DimensionError);
}

TEST_CASE("problem validation") {
  bemctl::QPProblem<double> qp{Mat::Identity(2, 2), Vec::Zero(3), Mat::Identity(2, 2),
                               Vec::Zero(2), Vec::Ones(2)};
  CHECK_THROWS_AS(bemctl::solve_qp(qp), bemctl::DimensionError);
  bemctl::QPSettings s;
  s.alpha = 2.5;
  qp.f = Vec::Zero(2);
  CHECK_THROWS_AS(bemctl::solve_qp(qp, s), bemctl::InvalidParameter);
}
