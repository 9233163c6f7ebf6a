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
/// Signal-matrix predictive control. Offline input/output data is arranged
/// as a block-Hankel matrix partitioned into past (T_ini) and future (N)
/// windows; trajectories are predicted as column combinations U g, Y g.
/// The combination vector g is chosen by a likelihood-motivated fit:
///
///   minimize  ||Y_f g - r||_Q^2 + ||U_f g||_Qp^2
///             + lambda_y ||Y_p g - y_ini||^2 + lambda_g ||g||^2
///   s.t.      U_p g = u_ini,  W g = w (measured disturbances),
///             u_lo <= U_f g <= u_hi,  soft y_lo <= Y_f g <= y_hi
///
/// with lambda_y = 1 / noise_variance. Measured outputs are treated as
/// noisy, inputs as exact.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "bemctl/errors.hpp"
#include "bemctl/linalg.hpp"
#include "bemctl/mpc.hpp"
#include "bemctl/qp.hpp"

namespace bemctl {

/// Relative singular-value threshold used for rank decisions.
inline constexpr double kRankTolerance = 1e-9;

/// Block-Hankel matrix of order `depth` from time-major data (T x width):
/// column j stacks rows j .. j+depth-1.
template <typename Scalar>
Matrix<Scalar> block_hankel(const Matrix<Scalar>& data, int depth) {
  const Eigen::Index T = data.rows(), w = data.cols();
  const Eigen::Index L = T - depth + 1;
  if (depth < 1 || L < 1) throw InvalidParameter("block_hankel: not enough samples");
  Matrix<Scalar> h(depth * w, L);
  for (Eigen::Index j = 0; j < L; ++j) {
    for (int i = 0; i < depth; ++i) {
      h.block(i * w, j, w, 1) = data.row(j + i).transpose();
    }
  }
  return h;
}

template <typename Derived>
Eigen::Index numerical_rank(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(m);
  qr.setThreshold(Scalar(kRankTolerance));
  return qr.rank();
}

template <typename Scalar = double>
struct SignalMatrix {
  Matrix<Scalar> U_p, Y_p, U_f, Y_f;
  Matrix<Scalar> W_p, W_f;  // measured disturbance blocks, zero rows if none
  int T_ini = 0;
  int N = 0;
  Eigen::Index L = 0;
  Eigen::Index m = 0, p = 0, q = 0;

  // Persistency-of-excitation diagnostics.
  Eigen::Index input_rank = 0;    // rank of [U; W] Hankel of order T_ini+N
  Eigen::Index stacked_rank = 0;  // rank of [U; W; Y] Hankel
  bool pe_ok = false;             // input Hankel has full row rank

  Eigen::Index exogenous_rows() const { return (m + q) * (T_ini + N); }
};

/// Builds the partitioned Hankel matrix. Data is time-major: row t holds the
/// sample at step t. `w_data` (optional) holds measured disturbances.
template <typename Scalar = double>
SignalMatrix<Scalar> build_signal_matrix(const Matrix<Scalar>& u_data,
                                         const Matrix<Scalar>& y_data,
                                         int T_ini, int N,
                                         const Matrix<Scalar>& w_data = Matrix<Scalar>()) {
  if (T_ini < 1 || N < 1) throw InvalidParameter("build_signal_matrix: T_ini, N >= 1");
  const Eigen::Index T = u_data.rows();
  if (y_data.rows() != T) {
    throw DimensionError("build_signal_matrix: input/output lengths differ");
  }
  if (w_data.size() > 0 && w_data.rows() != T) {
    throw DimensionError("build_signal_matrix: disturbance length differs");
  }
  if (T < T_ini + N) {
    throw InvalidParameter("build_signal_matrix: need at least T_ini + N = " +
                           std::to_string(T_ini + N) + " samples, got " +
                           std::to_string(T));
  }
  const int depth = T_ini + N;
  SignalMatrix<Scalar> sm;
  sm.T_ini = T_ini;
  sm.N = N;
  sm.m = u_data.cols();
  sm.p = y_data.cols();
  sm.q = w_data.size() > 0 ? w_data.cols() : 0;
  sm.L = T - depth + 1;

  const Matrix<Scalar> hu = block_hankel(u_data, depth);
  const Matrix<Scalar> hy = block_hankel(y_data, depth);
  sm.U_p = hu.topRows(T_ini * sm.m);
  sm.U_f = hu.bottomRows(N * sm.m);
  sm.Y_p = hy.topRows(T_ini * sm.p);
  sm.Y_f = hy.bottomRows(N * sm.p);
  Matrix<Scalar> hw(0, sm.L);
  if (sm.q > 0) {
    hw = block_hankel(w_data, depth);
    sm.W_p = hw.topRows(T_ini * sm.q);
    sm.W_f = hw.bottomRows(N * sm.q);
  } else {
    sm.W_p.resize(0, sm.L);
    sm.W_f.resize(0, sm.L);
  }

  Matrix<Scalar> exo(hu.rows() + hw.rows(), sm.L);
  exo << hu, hw;
  Matrix<Scalar> stacked(exo.rows() + hy.rows(), sm.L);
  stacked << exo, hy;
  sm.input_rank = numerical_rank(exo);
  sm.stacked_rank = numerical_rank(stacked);
  sm.pe_ok = sm.input_rank == exo.rows();
  return sm;
}

template <typename Scalar = double>
struct SMMPCConfig {
  int T_ini = 4;
  int N = 24;
  Matrix<Scalar> Q;   // p x p
  Matrix<Scalar> Qp;  // m x m
  Scalar lambda_g = 1e-2;
  Scalar lambda_y = 400;  // +inf enforces Y_p g = y_ini exactly
  Scalar noise_variance = 0.0025;
  Box<Scalar> u_box;
  Box<Scalar> y_box;  // soft; infinite entries disable a bound
  Scalar slack_weight = 1e4;
  Scalar slack_quadratic = 1;

  /// lambda_y from the assumed output-noise variance.
  void set_lambda_y_from_noise() { lambda_y = Scalar(1) / noise_variance; }

  void validate(Eigen::Index m, Eigen::Index p) const {
    if (T_ini < 1 || N < 1) throw InvalidParameter("SMMPCConfig: T_ini, N >= 1");
    if (!(lambda_g >= 0) || !(lambda_y > 0) || !(noise_variance >= 0)) {
      throw InvalidParameter("SMMPCConfig: weights must be >= 0 and lambda_y > 0");
    }
    if (Q.rows() != p || Q.cols() != p || Qp.rows() != m || Qp.cols() != m) {
      throw DimensionError("SMMPCConfig: Q must be p x p and Qp m x m");
    }
    if (min_eigenvalue(Q) < -1e-9 || min_eigenvalue(Qp) < -1e-9) {
      throw InvalidParameter("SMMPCConfig: Q and Qp must be PSD");
    }
    if (u_box.lo.size() != m || u_box.hi.size() != m) {
      throw DimensionError("SMMPCConfig: u_box must be length m");
    }
    if (y_box.lo.size() != p || y_box.hi.size() != p) {
      throw DimensionError("SMMPCConfig: y_box must be length p");
    }
  }
};

/// Least-squares combination for a given future input: the open-loop
/// predictor used for cross-validation and exactness checks. Equalities
/// U_p g = u_ini, U_f g = u_f, W g = w are enforced; the remaining freedom
/// minimizes lambda_y ||Y_p g - y_ini||^2 + lambda_g ||g||^2 (minimum norm
/// when that is degenerate). An infinite lambda_y makes Y_p g = y_ini hard.
///
/// g is searched in the row space of the stacked data, g = V a with V
/// orthonormal: components outside it change no block and only add to
/// ||g||. All factorizations are done once, so predict() costs a few small
/// triangular solves.
template <typename Scalar = double>
class SmmPredictor {
 public:
  SmmPredictor(const SignalMatrix<Scalar>& sm, Scalar lambda_g, Scalar lambda_y)
      : sm_(&sm), hard_y_(!std::isfinite(static_cast<double>(lambda_y))) {
    if (!(lambda_g >= 0) || !(lambda_y >= 0)) {
      throw InvalidParameter("smm_predict: weights must be >= 0");
    }
    const Eigen::Index L = sm.L;
    Matrix<Scalar> data(sm.U_p.rows() + sm.U_f.rows() + sm.W_p.rows() + sm.W_f.rows() +
                            sm.Y_p.rows() + sm.Y_f.rows(),
                        L);
    data << sm.U_p, sm.U_f, sm.W_p, sm.W_f, sm.Y_p, sm.Y_f;
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> row_qr(data.transpose());
    row_qr.setThreshold(Scalar(kRankTolerance));
    const Eigen::Index na = row_qr.rank();
    const Matrix<Scalar> basis = row_qr.householderQ() * Matrix<Scalar>::Identity(L, na);

    Eigen::Index neq = sm.U_p.rows() + sm.U_f.rows() + sm.W_p.rows() + sm.W_f.rows();
    if (hard_y_) neq += sm.Y_p.rows();
    eq_a_ = data.topRows(neq) * basis;  // Y_p directly follows the exogenous rows
    yp_a_ = sm.Y_p * basis;
    yf_a_ = sm.Y_f * basis;
    eq_cod_.setThreshold(Scalar(kRankTolerance));
    eq_cod_.compute(eq_a_);

    if (hard_y_ || na == 0) return;
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> nqr(eq_a_.transpose());
    nqr.setThreshold(Scalar(kRankTolerance));
    const Eigen::Index rank = neq > 0 ? nqr.rank() : 0;
    if (rank == na) return;
    null_ = neq > 0 ? Matrix<Scalar>(Matrix<Scalar>(nqr.householderQ()).rightCols(na - rank))
                    : Matrix<Scalar>::Identity(na, na);
    sy_ = std::sqrt(lambda_y);
    sg_ = std::sqrt(lambda_g);
    if (sy_ == 0 && sg_ == 0) return;  // minimum norm
    Matrix<Scalar> lhs(yp_a_.rows() + null_.cols(), null_.cols());
    lhs << sy_ * yp_a_ * null_, sg_ * Matrix<Scalar>::Identity(null_.cols(), null_.cols());
    ls_.setThreshold(Scalar(kRankTolerance));
    ls_.compute(lhs);
    have_ls_ = true;
  }

  Vector<Scalar> predict(const Vector<Scalar>& u_ini, const Vector<Scalar>& y_ini,
                         const Vector<Scalar>& u_f,
                         const Vector<Scalar>& w_ini = Vector<Scalar>(),
                         const Vector<Scalar>& w_f = Vector<Scalar>()) const {
    const auto& sm = *sm_;
    if (u_ini.size() != sm.U_p.rows() || y_ini.size() != sm.Y_p.rows() ||
        u_f.size() != sm.U_f.rows() || w_ini.size() != sm.W_p.rows() ||
        w_f.size() != sm.W_f.rows()) {
      throw DimensionError("smm_predict: window sizes do not match the signal matrix");
    }
    Vector<Scalar> b(eq_a_.rows());
    Eigen::Index r0 = 0;
    for (const Vector<Scalar>* part : {&u_ini, &u_f, &w_ini, &w_f}) {
      b.segment(r0, part->size()) = *part;
      r0 += part->size();
    }
    if (hard_y_) b.segment(r0, y_ini.size()) = y_ini;
    if (eq_a_.cols() == 0) return Vector<Scalar>::Zero(sm.Y_f.rows());
    const Vector<Scalar> a0 = eq_cod_.solve(b);
    const Scalar eq_res = (eq_a_ * a0 - b).norm();
    if (eq_res > Scalar(1e-6) * std::max(Scalar(1), b.norm())) {
      throw NumericalError("smm_predict: equality system inconsistent (residual " +
                           std::to_string(static_cast<double>(eq_res)) + ")");
    }
    if (!have_ls_) return yf_a_ * a0;
    Vector<Scalar> rhs(yp_a_.rows() + null_.cols());
    rhs << sy_ * (y_ini - yp_a_ * a0), -sg_ * (null_.transpose() * a0);
    const Vector<Scalar> v = ls_.solve(rhs);
    return yf_a_ * (a0 + null_ * v);
  }

 private:
  const SignalMatrix<Scalar>* sm_;
  bool hard_y_;
  Matrix<Scalar> eq_a_, yp_a_, yf_a_, null_;
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> eq_cod_;
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> ls_;
  Scalar sy_ = 0, sg_ = 0;
  bool have_ls_ = false;
};

/// One-shot form of SmmPredictor::predict. Returns Y_f g (N p).
template <typename Scalar>
Vector<Scalar> smm_predict(const SignalMatrix<Scalar>& sm, const Vector<Scalar>& u_ini,
                           const Vector<Scalar>& y_ini, const Vector<Scalar>& u_f,
                           Scalar lambda_g, Scalar lambda_y,
                           const Vector<Scalar>& w_ini = Vector<Scalar>(),
                           const Vector<Scalar>& w_f = Vector<Scalar>()) {
  return SmmPredictor<Scalar>(sm, lambda_g, lambda_y).predict(u_ini, y_ini, u_f, w_ini, w_f);
}

template <typename Scalar = double>
struct SmmpcDiagnostics {
  Scalar past_output_misfit = 0;  // ||Y_p g - y_ini||
  Scalar g_norm = 0;
  bool pe_ok = false;
  Scalar max_slack = 0;
};

template <typename Scalar = double>
struct SmmpcStepResult {
  Vector<Scalar> u0;
  Matrix<Scalar> u_plan;  // m x N
  Matrix<Scalar> y_pred;  // p x N
  Vector<Scalar> g;
  QPSolution<Scalar> sol;
  SmmpcDiagnostics<Scalar> diagnostics;
  bool fallback = false;
};

/// Data-driven receding-horizon controller over a fixed signal matrix.
///
/// The objective depends on g only through the data products D g (D stacks
/// every block of the signal matrix) plus the ridge lambda_g ||g||^2, so the
/// optimum lies in the row space of D. The controller parametrizes
/// g = V (a0 + Z v) with V an orthonormal row-space basis, a0 a particular
/// solution of the hard equalities and Z a basis of their null space. The
/// QP then has variables [v | lower slacks | upper slacks] and rows
/// [u box on U_f g | s >= 0 | soft lower | soft upper]. This is the same
/// problem as the one over g, without the redundant equality rows that
/// periodic measured disturbances produce.
template <typename Scalar = double>
class SmmpcController {
 public:
  SmmpcController(SignalMatrix<Scalar> sm, SMMPCConfig<Scalar> cfg,
                  QPSettings settings = {})
      : sm_(std::move(sm)), cfg_(std::move(cfg)), settings_(settings) {
    cfg_.validate(sm_.m, sm_.p);
    if (cfg_.T_ini != sm_.T_ini || cfg_.N != sm_.N) {
      throw InvalidParameter("SmmpcController: config T_ini/N differ from signal matrix");
    }
    build_structure();
  }

  const SignalMatrix<Scalar>& signal_matrix() const { return sm_; }
  const SMMPCConfig<Scalar>& config() const { return cfg_; }

  /// Past windows are stacked oldest first (T_ini blocks). `r_window` is
  /// p x k (k <= N, last column held). `w_f` stacks the disturbance forecast.
  SmmpcStepResult<Scalar> step(const Vector<Scalar>& u_ini, const Vector<Scalar>& y_ini,
                               const Matrix<Scalar>& r_window,
                               const Vector<Scalar>& w_ini = Vector<Scalar>(),
                               const Vector<Scalar>& w_f = Vector<Scalar>()) {
    const Eigen::Index m = sm_.m, p = sm_.p;
    const int N = sm_.N;
    if (u_ini.size() != sm_.U_p.rows() || y_ini.size() != sm_.Y_p.rows()) {
      throw DimensionError("smmpc_step: u_ini/y_ini must hold T_ini samples");
    }
    if (w_ini.size() != sm_.W_p.rows() || w_f.size() != sm_.W_f.rows()) {
      throw DimensionError("smmpc_step: disturbance windows do not match");
    }
    if (r_window.rows() != p || r_window.cols() < 1 || r_window.cols() > N) {
      throw DimensionError("smmpc_step: reference window must be p x (1..N)");
    }
    Vector<Scalar> r(N * p);
    for (int k = 0; k < N; ++k) {
      r.segment(k * p, p) = r_window.col(std::min<Eigen::Index>(k, r_window.cols() - 1));
    }

    // Particular solution of the hard equalities (inputs are exact).
    Vector<Scalar> eq_rhs(eq_a_.rows());
    Eigen::Index r0 = 0;
    eq_rhs.segment(r0, u_ini.size()) = u_ini;
    r0 += u_ini.size();
    eq_rhs.segment(r0, w_ini.size()) = w_ini;
    r0 += w_ini.size();
    eq_rhs.segment(r0, w_f.size()) = w_f;
    r0 += w_f.size();
    if (hard_y_) eq_rhs.segment(r0, y_ini.size()) = y_ini;
    Vector<Scalar> a0 = Vector<Scalar>::Zero(basis_.cols());
    if (eq_a_.rows() > 0 && basis_.cols() > 0) {
      a0 = eq_cod_.solve(eq_rhs);
    }
    const Scalar res = eq_a_.rows() > 0 ? (eq_a_ * a0 - eq_rhs).norm() : Scalar(0);
    if (res > Scalar(1e-6) * std::max(Scalar(1), eq_rhs.norm())) {
      throw NumericalError(
          "smmpc_step: past-window equalities inconsistent (residual " +
          std::to_string(static_cast<double>(res)) + ", input rank " +
          std::to_string(sm_.input_rank) + " of " +
          std::to_string(sm_.exogenous_rows()) + ")");
    }

    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    const Eigen::Index nv = null_.cols();
    const Eigen::Index ns = num_slacks();
    Vector<Scalar> grad_a = h_a_ * a0 - yf_a_.transpose() * (qbar_ * r);
    if (!hard_y_) grad_a -= cfg_.lambda_y * (yp_a_.transpose() * y_ini);
    const Vector<Scalar> uf0 = uf_a_ * a0;
    const Vector<Scalar> yf0 = yf_a_ * a0;

    SmmpcStepResult<Scalar> out;
    Vector<Scalar> v = Vector<Scalar>::Zero(nv);
    if (solver_) {
      Vector<Scalar> f = Vector<Scalar>::Zero(nv + ns);
      f.head(nv) = Scalar(2) * (null_.transpose() * grad_a);
      f.tail(ns).setConstant(cfg_.slack_weight);

      Vector<Scalar> lo(qp_.num_constraints()), hi(qp_.num_constraints());
      Eigen::Index row = 0;
      for (int k = 0; k < N; ++k) {
        lo.segment(row + k * m, m) = cfg_.u_box.lo - uf0.segment(k * m, m);
        hi.segment(row + k * m, m) = cfg_.u_box.hi - uf0.segment(k * m, m);
      }
      row += N * m;
      lo.segment(row, ns).setZero();
      hi.segment(row, ns).setConstant(inf);
      row += ns;
      for (auto yr : lo_rows_) {
        lo(row) = cfg_.y_box.lo(yr % p) - yf0(yr);
        hi(row) = inf;
        ++row;
      }
      for (auto yr : hi_rows_) {
        lo(row) = -inf;
        hi(row) = cfg_.y_box.hi(yr % p) - yf0(yr);
        ++row;
      }
      solver_->update_vectors(f, lo, hi);
      out.sol = solver_->solve(warm_z_ ? &*warm_z_ : nullptr, warm_y_ ? &*warm_y_ : nullptr);
      v = out.sol.z_star.head(nv);
    } else {
      // Everything is pinned by the equalities; only the input box remains.
      out.sol.status = ((uf0.array() >= tile(cfg_.u_box.lo).array() - Scalar(1e-9)).all() &&
                        (uf0.array() <= tile(cfg_.u_box.hi).array() + Scalar(1e-9)).all())
                           ? QPStatus::optimal
                           : QPStatus::infeasible;
    }

    const Vector<Scalar> a = a0 + null_ * v;
    out.g = basis_ * a;
    const Vector<Scalar> uf = uf_a_ * a;
    const Vector<Scalar> yf = yf_a_ * a;
    out.u_plan = Eigen::Map<const Matrix<Scalar>>(uf.data(), m, N);
    out.y_pred = Eigen::Map<const Matrix<Scalar>>(yf.data(), p, N);
    for (Eigen::Index k = 0; k < N; ++k) {
      out.u_plan.col(k) = out.u_plan.col(k).cwiseMax(cfg_.u_box.lo).cwiseMin(cfg_.u_box.hi);
    }
    out.diagnostics.pe_ok = sm_.pe_ok;
    out.diagnostics.g_norm = a.norm();
    out.diagnostics.past_output_misfit = (yp_a_ * a - y_ini).norm();
    if (ns > 0 && out.sol.z_star.size() > 0) {
      out.diagnostics.max_slack = std::max(Scalar(0), out.sol.z_star.tail(ns).maxCoeff());
    }
    if (out.sol.status == QPStatus::optimal) {
      if (solver_) {
        warm_z_ = out.sol.z_star;
        warm_y_ = out.sol.y_dual;
      }
      out.u0 = out.u_plan.col(0);
      last_good_ = out.u0;
    } else {
      out.fallback = true;
      warm_z_.reset();
      warm_y_.reset();
      out.u0 = last_good_ ? *last_good_ : Vector<Scalar>(out.u_plan.col(0));
    }
    return out;
  }

 private:
  Eigen::Index num_slacks() const {
    return static_cast<Eigen::Index>(lo_rows_.size() + hi_rows_.size());
  }

  Vector<Scalar> tile(const Vector<Scalar>& b) const {
    return b.replicate(sm_.N, 1);
  }

  void build_structure() {
    const Eigen::Index m = sm_.m, p = sm_.p, L = sm_.L;
    const int N = sm_.N;
    hard_y_ = !std::isfinite(static_cast<double>(cfg_.lambda_y));
    qbar_ = detail::block_diag_repeat(cfg_.Q, N);
    const Matrix<Scalar> qpbar = detail::block_diag_repeat(cfg_.Qp, N);
    for (int k = 0; k < N; ++k) {
      for (Eigen::Index i = 0; i < p; ++i) {
        if (std::isfinite(static_cast<double>(cfg_.y_box.lo(i)))) lo_rows_.push_back(k * p + i);
        if (std::isfinite(static_cast<double>(cfg_.y_box.hi(i)))) hi_rows_.push_back(k * p + i);
      }
    }

    // Orthonormal basis of the row space of the stacked data.
    Matrix<Scalar> data(sm_.U_p.rows() + sm_.W_p.rows() + sm_.W_f.rows() + sm_.Y_p.rows() +
                            sm_.U_f.rows() + sm_.Y_f.rows(),
                        L);
    data << sm_.U_p, sm_.W_p, sm_.W_f, sm_.Y_p, sm_.U_f, sm_.Y_f;
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> row_qr(data.transpose());
    row_qr.setThreshold(Scalar(kRankTolerance));
    const Matrix<Scalar> q_full = row_qr.householderQ();
    basis_ = q_full.leftCols(row_qr.rank());
    const Eigen::Index na = basis_.cols();

    uf_a_ = sm_.U_f * basis_;
    yf_a_ = sm_.Y_f * basis_;
    yp_a_ = sm_.Y_p * basis_;

    Eigen::Index neq = sm_.U_p.rows() + sm_.W_p.rows() + sm_.W_f.rows();
    if (hard_y_) neq += sm_.Y_p.rows();
    Matrix<Scalar> eq(neq, L);
    Eigen::Index r0 = 0;
    for (const Matrix<Scalar>* blk : {&sm_.U_p, &sm_.W_p, &sm_.W_f}) {
      eq.middleRows(r0, blk->rows()) = *blk;
      r0 += blk->rows();
    }
    if (hard_y_) eq.middleRows(r0, sm_.Y_p.rows()) = sm_.Y_p;
    eq_a_ = eq * basis_;

    // Null space of the equality rows in basis coordinates.
    Eigen::Index eq_rank = 0;
    if (neq > 0 && na > 0) {
      eq_cod_.setThreshold(Scalar(kRankTolerance));
      eq_cod_.compute(eq_a_);
      Eigen::ColPivHouseholderQR<Matrix<Scalar>> nqr(eq_a_.transpose());
      nqr.setThreshold(Scalar(kRankTolerance));
      eq_rank = nqr.rank();
      const Matrix<Scalar> nq = nqr.householderQ();
      null_ = nq.rightCols(na - eq_rank);
    } else {
      null_ = Matrix<Scalar>::Identity(na, na);
    }

    h_a_ = yf_a_.transpose() * qbar_ * yf_a_ + uf_a_.transpose() * qpbar * uf_a_;
    if (!hard_y_) h_a_ += cfg_.lambda_y * yp_a_.transpose() * yp_a_;
    h_a_.diagonal().array() += cfg_.lambda_g;
    h_a_ = symmetrized(h_a_);

    const Eigen::Index nv = null_.cols();
    const Eigen::Index ns = num_slacks();
    const Eigen::Index nlo = static_cast<Eigen::Index>(lo_rows_.size());
    const Eigen::Index nz = nv + ns;
    if (nz == 0) return;

    qp_.H = Matrix<Scalar>::Zero(nz, nz);
    qp_.H.topLeftCorner(nv, nv) = symmetrized(Scalar(2) * null_.transpose() * h_a_ * null_);
    qp_.H.bottomRightCorner(ns, ns).diagonal().setConstant(Scalar(2) * cfg_.slack_quadratic);

    const Matrix<Scalar> uf_v = uf_a_ * null_;
    const Matrix<Scalar> yf_v = yf_a_ * null_;
    const Eigen::Index rows = N * m + ns + ns;
    qp_.A = Matrix<Scalar>::Zero(rows, nz);
    Eigen::Index row = 0;
    qp_.A.block(row, 0, N * m, nv) = uf_v;
    row += N * m;
    qp_.A.block(row, nv, ns, ns).setIdentity();
    row += ns;
    for (Eigen::Index j = 0; j < nlo; ++j, ++row) {
      qp_.A.block(row, 0, 1, nv) = yf_v.row(lo_rows_[static_cast<std::size_t>(j)]);
      qp_.A(row, nv + j) = Scalar(1);
    }
    for (std::size_t j = 0; j < hi_rows_.size(); ++j, ++row) {
      qp_.A.block(row, 0, 1, nv) = yf_v.row(hi_rows_[j]);
      qp_.A(row, nv + nlo + static_cast<Eigen::Index>(j)) = Scalar(-1);
    }
    qp_.f = Vector<Scalar>::Zero(nz);
    qp_.lo = Vector<Scalar>::Zero(rows);
    qp_.hi = Vector<Scalar>::Zero(rows);
    solver_.emplace(qp_, settings_);
  }

  SignalMatrix<Scalar> sm_;
  SMMPCConfig<Scalar> cfg_;
  QPSettings settings_;
  bool hard_y_ = false;
  Matrix<Scalar> qbar_;
  Matrix<Scalar> basis_;  // L x na, orthonormal row-space basis
  Matrix<Scalar> uf_a_, yf_a_, yp_a_, eq_a_, h_a_;
  Matrix<Scalar> null_;   // na x nv
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> eq_cod_;
  std::vector<Eigen::Index> lo_rows_, hi_rows_;
  QPProblem<Scalar> qp_;
  std::optional<QPSolver<Scalar>> solver_;
  std::optional<Vector<Scalar>> warm_z_, warm_y_, last_good_;
};

/// Stateless single step over a signal matrix.
template <typename Scalar>
SmmpcStepResult<Scalar> smmpc_step(const SignalMatrix<Scalar>& sm,
                                   const SMMPCConfig<Scalar>& cfg,
                                   const Vector<Scalar>& u_ini,
                                   const Vector<Scalar>& y_ini,
                                   const Matrix<Scalar>& r_window,
                                   const QPSettings& settings = {}) {
  SmmpcController<Scalar> ctrl(sm, cfg, settings);
  return ctrl.step(u_ini, y_ini, r_window);
}

template <typename Scalar = double>
struct PredictionErrorStats {
  Scalar mean = 0;
  Scalar rmse = 0;
  std::size_t windows = 0;
  std::size_t samples = 0;
};

/// Open-loop N-step prediction error of the signal-matrix predictor over
/// every window of a held-out trajectory (time-major data).
template <typename Scalar>
PredictionErrorStats<Scalar> cross_validate(const SignalMatrix<Scalar>& sm,
                                            const SMMPCConfig<Scalar>& cfg,
                                            const Matrix<Scalar>& u_held,
                                            const Matrix<Scalar>& y_held,
                                            const Matrix<Scalar>& w_held = Matrix<Scalar>()) {
  const Eigen::Index T = u_held.rows();
  if (y_held.rows() != T || u_held.cols() != sm.m || y_held.cols() != sm.p) {
    throw DimensionError("cross_validate: held-out data shape mismatch");
  }
  const int depth = sm.T_ini + sm.N;
  PredictionErrorStats<Scalar> st;
  Scalar sum = 0, sum_sq = 0;
  auto window = [](const Matrix<Scalar>& d, Eigen::Index start, int len) {
    Vector<Scalar> v(len * d.cols());
    for (int i = 0; i < len; ++i) v.segment(i * d.cols(), d.cols()) = d.row(start + i).transpose();
    return v;
  };
  const SmmPredictor<Scalar> predictor(sm, cfg.lambda_g, cfg.lambda_y);
  for (Eigen::Index t = 0; t + depth <= T; ++t) {
    const Vector<Scalar> u_ini = window(u_held, t, sm.T_ini);
    const Vector<Scalar> y_ini = window(y_held, t, sm.T_ini);
    const Vector<Scalar> u_f = window(u_held, t + sm.T_ini, sm.N);
    const Vector<Scalar> y_true = window(y_held, t + sm.T_ini, sm.N);
    Vector<Scalar> w_ini, w_f;
    if (sm.q > 0) {
      w_ini = window(w_held, t, sm.T_ini);
      w_f = window(w_held, t + sm.T_ini, sm.N);
    }
    const Vector<Scalar> y_hat = predictor.predict(u_ini, y_ini, u_f, w_ini, w_f);
    const Vector<Scalar> e = y_hat - y_true;
    sum += e.sum();
    sum_sq += e.squaredNorm();
    st.samples += static_cast<std::size_t>(e.size());
    ++st.windows;
  }
  if (st.samples > 0) {
    st.mean = sum / Scalar(st.samples);
    st.rmse = std::sqrt(sum_sq / Scalar(st.samples));
  }
  return st;
}

/// Offline trajectory file: header `k,u_0..u_{m-1},y_0..y_{p-1}`.
struct OfflineData {
  Matrix<double> u;  // T x m
  Matrix<double> y;  // T x p
};

void write_offline_csv(const std::string& path, const OfflineData& data);
OfflineData read_offline_csv(const std::string& path);

}  // namespace bemctl
