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

/// @file
///
/// Receding-horizon MPC for the horizon-N tracking/energy problem
///
///   minimize   sum_{k=0}^{N-1} ||y_k - r_k||_Q^2 + ||u_k||_Qp^2
///   s.t.       x_{k+1} = A x_k + B u_k + w_k,  y_k = C x_k + D u_k,
///              x_0 = x_hat,  u_k in U (hard box),  y_k in Y (soft box)
///
/// States are eliminated (condensing) so the solver sees a dense QP in the
/// stacked inputs plus one nonnegative L1-penalized slack per finite output
/// bound row.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bemctl/errors.hpp"
#include "bemctl/linalg.hpp"
#include "bemctl/plant.hpp"
#include "bemctl/qp.hpp"

namespace bemctl {

template <typename Scalar = double>
struct Box {
  Vector<Scalar> lo;
  Vector<Scalar> hi;

  static Box unbounded(Eigen::Index dim) {
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    return {Vector<Scalar>::Constant(dim, -inf),
            Vector<Scalar>::Constant(dim, inf)};
  }
};

template <typename Scalar = double>
struct OCPSpec {
  LTIModel<Scalar> model;
  int N = 1;
  Matrix<Scalar> Q;    // p x p, PSD
  Matrix<Scalar> Qp;   // m x m, PD
  Matrix<Scalar> r;    // p x N, column k is r_{t+k}
  Box<Scalar> u_box;   // hard
  Box<Scalar> y_box;   // softened
  Vector<Scalar> x0;
  Scalar slack_weight = 1e4;
  // Small quadratic term on slacks that keeps the Hessian strictly PD.
  Scalar slack_quadratic = 1;
  // Known additive state offsets w_k (n x N), e.g. E * ambient forecast.
  Matrix<Scalar> disturbance;
};

inline constexpr double kMinInputWeightEig = 1e-9;

/// Validates and assembles an OCP. `jitter_qp` lifts a Qp whose smallest
/// eigenvalue is below 1e-9 up to it instead of rejecting it.
template <typename Scalar = double>
OCPSpec<Scalar> build_ocp(LTIModel<Scalar> model, int N, Matrix<Scalar> Q,
                          Matrix<Scalar> Qp, Matrix<Scalar> r,
                          Box<Scalar> u_box, Box<Scalar> y_box,
                          Vector<Scalar> x0, Scalar slack_weight = 1e4,
                          bool jitter_qp = false) {
  model.validate();
  const auto n = model.n(), m = model.m(), p = model.p();
  if (N < 1) throw InvalidParameter("build_ocp: horizon N must be >= 1");
  if (Q.rows() != p || Q.cols() != p) throw DimensionError("build_ocp: Q must be p x p");
  if (Qp.rows() != m || Qp.cols() != m) throw DimensionError("build_ocp: Qp must be m x m");
  if (r.rows() != p || r.cols() != N) throw DimensionError("build_ocp: r must be p x N");
  if (u_box.lo.size() != m || u_box.hi.size() != m) throw DimensionError("build_ocp: u_box must be length m");
  if (y_box.lo.size() != p || y_box.hi.size() != p) throw DimensionError("build_ocp: y_box must be length p");
  if (x0.size() != n) throw DimensionError("build_ocp: x0 must be length n");
  if (!all_finite(Q) || !all_finite(Qp) || !all_finite(r) || !all_finite(x0)) {
    throw InvalidParameter("build_ocp: non-finite weights, reference or x0");
  }
  if (asymmetry(Q) > 1e-9 || min_eigenvalue(Q) < -1e-9) {
    throw InvalidParameter("build_ocp: Q must be symmetric PSD");
  }
  if (asymmetry(Qp) > 1e-9) throw InvalidParameter("build_ocp: Qp must be symmetric");
  Qp = symmetrized(Qp);
  const Scalar qp_min = min_eigenvalue(Qp);
  if (qp_min < Scalar(kMinInputWeightEig)) {
    if (!jitter_qp) throw InvalidParameter("build_ocp: Qp must be positive definite");
    Qp.diagonal().array() += Scalar(kMinInputWeightEig) - qp_min;
  }
  if ((u_box.lo.array() > u_box.hi.array()).any()) {
    throw InvalidParameter("build_ocp: u_box lo > hi");
  }
  if ((y_box.lo.array() > y_box.hi.array()).any()) {
    throw InvalidParameter("build_ocp: y_box lo > hi");
  }
  if (!(slack_weight > 0)) throw InvalidParameter("build_ocp: slack_weight must be > 0");

  OCPSpec<Scalar> ocp;
  ocp.model = std::move(model);
  ocp.N = N;
  ocp.Q = symmetrized(Q);
  ocp.Qp = std::move(Qp);
  ocp.r = std::move(r);
  ocp.u_box = std::move(u_box);
  ocp.y_box = std::move(y_box);
  ocp.x0 = std::move(x0);
  ocp.slack_weight = slack_weight;
  ocp.disturbance = Matrix<Scalar>::Zero(n, N);
  return ocp;
}

/// Stacked output prediction Y = Gamma x0 + Phi U + Psi W over k = 0..N-1.
template <typename Scalar = double>
struct PredictionMatrices {
  Matrix<Scalar> Gamma;  // (N p) x n
  Matrix<Scalar> Phi;    // (N p) x (N m)
  Matrix<Scalar> Psi;    // (N p) x (N n), maps stacked state offsets
};

template <typename Scalar>
PredictionMatrices<Scalar> prediction_matrices(const LTIModel<Scalar>& model,
                                               int N) {
  const auto n = model.n(), m = model.m(), p = model.p();
  PredictionMatrices<Scalar> pm;
  pm.Gamma = Matrix<Scalar>::Zero(N * p, n);
  pm.Phi = Matrix<Scalar>::Zero(N * p, N * m);
  pm.Psi = Matrix<Scalar>::Zero(N * p, N * n);
  // c_apow[k] = C A^k
  std::vector<Matrix<Scalar>> c_apow(static_cast<std::size_t>(N));
  c_apow[0] = model.C;
  for (int k = 1; k < N; ++k) {
    c_apow[static_cast<std::size_t>(k)] = c_apow[static_cast<std::size_t>(k - 1)] * model.A;
  }
  for (int k = 0; k < N; ++k) {
    pm.Gamma.middleRows(k * p, p) = c_apow[static_cast<std::size_t>(k)];
    pm.Phi.block(k * p, k * m, p, m) = model.D;
    for (int j = 0; j < k; ++j) {
      const auto& ca = c_apow[static_cast<std::size_t>(k - 1 - j)];
      pm.Phi.block(k * p, j * m, p, m) = ca * model.B;
      pm.Psi.block(k * p, j * n, p, n) = ca;
    }
  }
  return pm;
}

/// Variable layout of the condensed QP: [U (N m) | lower slacks | upper slacks].
/// Constraint rows: [input box (N m) | slack >= 0 | soft lower | soft upper].
template <typename Scalar = double>
struct CondensedOCP {
  QPProblem<Scalar> qp;
  PredictionMatrices<Scalar> pred;
  Eigen::Index num_inputs = 0;
  std::vector<Eigen::Index> lo_rows;  // stacked output row per lower slack
  std::vector<Eigen::Index> hi_rows;  // stacked output row per upper slack

  Eigen::Index num_slacks() const {
    return static_cast<Eigen::Index>(lo_rows.size() + hi_rows.size());
  }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> block_diag_repeat(const Matrix<Scalar>& blk, int N) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(N * blk.rows(), N * blk.cols());
  for (int k = 0; k < N; ++k) {
    out.block(k * blk.rows(), k * blk.cols(), blk.rows(), blk.cols()) = blk;
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> stack_cols(const Matrix<Scalar>& m) {
  return Eigen::Map<const Vector<Scalar>>(m.data(), m.size());
}

}  // namespace detail

/// Structure-only part of condensing: H, A and the slack layout depend on
/// the model, weights and boxes but not on x0, r or w.
template <typename Scalar>
CondensedOCP<Scalar> condense_structure(const OCPSpec<Scalar>& ocp) {
  const auto m = ocp.model.m(), p = ocp.model.p();
  const int N = ocp.N;
  CondensedOCP<Scalar> c;
  c.pred = prediction_matrices(ocp.model, N);
  c.num_inputs = N * m;
  for (int k = 0; k < N; ++k) {
    for (Eigen::Index i = 0; i < p; ++i) {
      if (std::isfinite(static_cast<double>(ocp.y_box.lo(i)))) c.lo_rows.push_back(k * p + i);
      if (std::isfinite(static_cast<double>(ocp.y_box.hi(i)))) c.hi_rows.push_back(k * p + i);
    }
  }
  const Eigen::Index nu = c.num_inputs;
  const Eigen::Index nlo = static_cast<Eigen::Index>(c.lo_rows.size());
  const Eigen::Index nhi = static_cast<Eigen::Index>(c.hi_rows.size());
  const Eigen::Index ns = nlo + nhi;
  const Eigen::Index nz = nu + ns;

  const Matrix<Scalar> qbar = detail::block_diag_repeat(ocp.Q, N);
  const Matrix<Scalar> qpbar = detail::block_diag_repeat(ocp.Qp, N);
  const Matrix<Scalar>& phi = c.pred.Phi;

  auto& qp = c.qp;
  qp.H = Matrix<Scalar>::Zero(nz, nz);
  qp.H.topLeftCorner(nu, nu) =
      symmetrized(Scalar(2) * (phi.transpose() * qbar * phi + qpbar));
  qp.H.bottomRightCorner(ns, ns).diagonal().setConstant(Scalar(2) *
                                                        ocp.slack_quadratic);

  const Eigen::Index rows = nu + ns + nlo + nhi;
  qp.A = Matrix<Scalar>::Zero(rows, nz);
  qp.A.topLeftCorner(nu, nu).setIdentity();
  qp.A.block(nu, nu, ns, ns).setIdentity();
  for (Eigen::Index j = 0; j < nlo; ++j) {
    const auto row = c.lo_rows[static_cast<std::size_t>(j)];
    qp.A.block(nu + ns + j, 0, 1, nu) = phi.row(row);
    qp.A(nu + ns + j, nu + j) = Scalar(1);
  }
  for (Eigen::Index j = 0; j < nhi; ++j) {
    const auto row = c.hi_rows[static_cast<std::size_t>(j)];
    qp.A.block(nu + ns + nlo + j, 0, 1, nu) = phi.row(row);
    qp.A(nu + ns + nlo + j, nu + nlo + j) = Scalar(-1);
  }
  qp.f = Vector<Scalar>::Zero(nz);
  qp.lo = Vector<Scalar>::Zero(rows);
  qp.hi = Vector<Scalar>::Zero(rows);
  return c;
}

/// Fills f and the bounds for a given x0, reference and disturbance.
template <typename Scalar>
void condense_vectors(const OCPSpec<Scalar>& ocp, CondensedOCP<Scalar>& c) {
  const auto m = ocp.model.m(), p = ocp.model.p();
  const int N = ocp.N;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  const Eigen::Index nu = c.num_inputs;
  const Eigen::Index nlo = static_cast<Eigen::Index>(c.lo_rows.size());
  const Eigen::Index nhi = static_cast<Eigen::Index>(c.hi_rows.size());
  const Eigen::Index ns = nlo + nhi;

  Vector<Scalar> free_resp = c.pred.Gamma * ocp.x0;
  if (ocp.disturbance.size() > 0) {
    free_resp += c.pred.Psi * detail::stack_cols<Scalar>(ocp.disturbance);
  }
  const Vector<Scalar> rstack = detail::stack_cols<Scalar>(ocp.r);
  const Matrix<Scalar> qbar = detail::block_diag_repeat(ocp.Q, N);

  auto& qp = c.qp;
  qp.f.head(nu) = Scalar(2) * c.pred.Phi.transpose() * (qbar * (free_resp - rstack));
  qp.f.tail(ns).setConstant(ocp.slack_weight);

  for (int k = 0; k < N; ++k) {
    qp.lo.segment(k * m, m) = ocp.u_box.lo;
    qp.hi.segment(k * m, m) = ocp.u_box.hi;
  }
  qp.lo.segment(nu, ns).setZero();
  qp.hi.segment(nu, ns).setConstant(inf);
  for (Eigen::Index j = 0; j < nlo; ++j) {
    const auto row = c.lo_rows[static_cast<std::size_t>(j)];
    qp.lo(nu + ns + j) = ocp.y_box.lo(row % p) - free_resp(row);
    qp.hi(nu + ns + j) = inf;
  }
  for (Eigen::Index j = 0; j < nhi; ++j) {
    const auto row = c.hi_rows[static_cast<std::size_t>(j)];
    qp.lo(nu + ns + nlo + j) = -inf;
    qp.hi(nu + ns + nlo + j) = ocp.y_box.hi(row % p) - free_resp(row);
  }
}

template <typename Scalar>
CondensedOCP<Scalar> condense(const OCPSpec<Scalar>& ocp) {
  CondensedOCP<Scalar> c = condense_structure(ocp);
  condense_vectors(ocp, c);
  return c;
}

/// Forward simulation of the predictor under an input sequence (m x N).
template <typename Scalar>
Trajectory<Scalar> simulate_prediction(const LTIModel<Scalar>& model,
                                       const Vector<Scalar>& x0,
                                       const Matrix<Scalar>& u_seq,
                                       const Matrix<Scalar>& disturbance) {
  Trajectory<Scalar> tr;
  Vector<Scalar> x = x0;
  tr.states.push_back(x);
  for (Eigen::Index k = 0; k < u_seq.cols(); ++k) {
    const Vector<Scalar> u = u_seq.col(k);
    tr.times.push_back(static_cast<std::size_t>(k));
    tr.inputs.push_back(u);
    tr.outputs.push_back(model.C * x + model.D * u);
    x = model.A * x + model.B * u;
    if (disturbance.size() > 0) x += disturbance.col(k);
    tr.states.push_back(x);
  }
  return tr;
}

template <typename Scalar = double>
struct MpcStepResult {
  Vector<Scalar> u0;
  Trajectory<Scalar> predicted;
  QPSolution<Scalar> sol;
  bool fallback = false;   // solver not optimal; u0 is the last good input
  Scalar max_slack = 0;
};

/// Receding-horizon controller. Condensed matrices and the QP factorization
/// are built once from the template OCP and reused on every step; only x0,
/// the reference window and the disturbance forecast change.
template <typename Scalar = double>
class MpcController {
 public:
  explicit MpcController(OCPSpec<Scalar> tmpl, QPSettings settings = {})
      : ocp_(std::move(tmpl)), settings_(settings) {
    cond_ = condense_structure(ocp_);
    condense_vectors(ocp_, cond_);
    solver_.emplace(cond_.qp, settings_);
  }

  const OCPSpec<Scalar>& ocp() const { return ocp_; }
  const CondensedOCP<Scalar>& condensed() const { return cond_; }

  /// `r_window` is p x k with k <= N; shorter windows hold the last column.
  /// `w_forecast` (n x k, optional) is padded the same way.
  MpcStepResult<Scalar> step(const Vector<Scalar>& x_hat,
                             const Matrix<Scalar>& r_window,
                             const Matrix<Scalar>& w_forecast = Matrix<Scalar>()) {
    const auto n = ocp_.model.n(), m = ocp_.model.m(), p = ocp_.model.p();
    const int N = ocp_.N;
    if (x_hat.size() != n) throw DimensionError("mpc_step: x_hat size != n");
    if (r_window.rows() != p || r_window.cols() < 1 || r_window.cols() > N) {
      throw DimensionError("mpc_step: reference window must be p x (1..N)");
    }
    ocp_.x0 = x_hat;
    ocp_.r = pad_hold(r_window, N);
    if (w_forecast.size() > 0) {
      if (w_forecast.rows() != n) throw DimensionError("mpc_step: w rows != n");
      ocp_.disturbance = pad_hold(w_forecast, N);
    } else {
      ocp_.disturbance.setZero(n, N);
    }
    condense_vectors(ocp_, cond_);
    solver_->update_vectors(cond_.qp.f, cond_.qp.lo, cond_.qp.hi);

    MpcStepResult<Scalar> out;
    out.sol = solver_->solve(warm_z_ ? &*warm_z_ : nullptr,
                             warm_y_ ? &*warm_y_ : nullptr);

    Matrix<Scalar> u_seq(m, N);
    if (out.sol.status == QPStatus::optimal) {
      u_seq = Eigen::Map<const Matrix<Scalar>>(out.sol.z_star.data(), m, N);
      warm_z_ = out.sol.z_star;
      warm_y_ = out.sol.y_dual;
      const Eigen::Index ns = cond_.num_slacks();
      out.max_slack = ns > 0 ? out.sol.z_star.tail(ns).maxCoeff() : Scalar(0);
      out.max_slack = std::max(out.max_slack, Scalar(0));
    } else {
      out.fallback = true;
      if (last_good_) {
        u_seq = last_good_->replicate(1, N);
      } else if (out.sol.z_star.size() == cond_.qp.num_vars()) {
        u_seq = Eigen::Map<const Matrix<Scalar>>(out.sol.z_star.data(), m, N);
      } else {
        u_seq.setZero();
      }
      warm_z_.reset();
      warm_y_.reset();
    }
    for (Eigen::Index k = 0; k < N; ++k) {
      u_seq.col(k) = u_seq.col(k).cwiseMax(ocp_.u_box.lo).cwiseMin(ocp_.u_box.hi);
    }
    out.u0 = u_seq.col(0);
    if (!out.fallback) last_good_ = out.u0;
    out.predicted = simulate_prediction(ocp_.model, x_hat, u_seq, ocp_.disturbance);
    return out;
  }

 private:
  static Matrix<Scalar> pad_hold(const Matrix<Scalar>& w, int N) {
    Matrix<Scalar> out(w.rows(), N);
    for (int k = 0; k < N; ++k) {
      out.col(k) = w.col(std::min<Eigen::Index>(k, w.cols() - 1));
    }
    return out;
  }

  OCPSpec<Scalar> ocp_;
  QPSettings settings_;
  CondensedOCP<Scalar> cond_;
  std::optional<QPSolver<Scalar>> solver_;
  std::optional<Vector<Scalar>> warm_z_, warm_y_;
  std::optional<Vector<Scalar>> last_good_;
};

/// Stateless single step: builds a controller from the template and solves
/// once.
template <typename Scalar>
MpcStepResult<Scalar> mpc_step(const OCPSpec<Scalar>& ocp_template,
                               const Vector<Scalar>& x_hat,
                               const Matrix<Scalar>& r_window,
                               const QPSettings& settings = {}) {
  MpcController<Scalar> ctrl(ocp_template, settings);
  return ctrl.step(x_hat, r_window);
}

}  // namespace bemctl
