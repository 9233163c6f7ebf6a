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
/// Dense operator-splitting (ADMM) solver for convex quadratic programs
///
///   minimize    1/2 z^T H z + f^T z
///   subject to  lo <= A z <= hi
///
/// Rows with lo == hi are equalities; infinite bounds are allowed. The
/// iteration follows the usual splitting with over-relaxation: a
/// quasi-definite linear solve against H + sigma I + A^T diag(rho) A, an
/// over-relaxed projection onto the box, and a dual ascent step. The problem
/// is Ruiz-equilibrated first, rho is adapted by residual balancing, and a
/// converged iterate is polished by solving the equality-constrained KKT
/// system on the guessed active set.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include "bemctl/errors.hpp"
#include "bemctl/linalg.hpp"

namespace bemctl {

template <typename Scalar = double>
struct QPProblem {
  Matrix<Scalar> H;
  Vector<Scalar> f;
  Matrix<Scalar> A;
  Vector<Scalar> lo;
  Vector<Scalar> hi;

  Eigen::Index num_vars() const { return H.rows(); }
  Eigen::Index num_constraints() const { return A.rows(); }

  void validate() const {
    const auto n = H.rows();
    if (H.cols() != n || f.size() != n) {
      throw DimensionError("QPProblem: H must be n x n and f length n");
    }
    if (A.cols() != n && A.rows() != 0) {
      throw DimensionError("QPProblem: A must have n columns");
    }
    if (lo.size() != A.rows() || hi.size() != A.rows()) {
      throw DimensionError("QPProblem: bound length != constraint rows");
    }
    if (!all_finite(H) || !all_finite(f) || !all_finite(A)) {
      throw InvalidParameter("QPProblem: non-finite entry");
    }
  }
};

struct QPSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 20000;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  double adaptive_rho_tolerance = 5.0;
  int scaling_iters = 10;
  bool polish = true;
};

enum class QPStatus { optimal, max_iter, infeasible };

inline const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::optimal:
      return "optimal";
    case QPStatus::max_iter:
      return "max_iter";
    case QPStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

template <typename Scalar = double>
struct QPSolution {
  Vector<Scalar> z_star;
  Vector<Scalar> y_dual;  // multipliers of lo <= A z <= hi
  QPStatus status = QPStatus::max_iter;
  int iterations = 0;
  Scalar primal_residual = 0;
  Scalar dual_residual = 0;
  Scalar objective = 0;
  bool polished = false;
};

template <typename Scalar>
Scalar qp_objective(const QPProblem<Scalar>& qp, const Vector<Scalar>& z) {
  return Scalar(0.5) * z.dot(qp.H * z) + qp.f.dot(z);
}

/// Stationarity residual ||H z + f + A^T y||_inf.
template <typename Scalar>
Scalar qp_dual_residual(const QPProblem<Scalar>& qp, const Vector<Scalar>& z,
                        const Vector<Scalar>& y) {
  Vector<Scalar> r = qp.H * z + qp.f;
  if (qp.A.rows() > 0) r += qp.A.transpose() * y;
  return r.size() ? r.cwiseAbs().maxCoeff() : Scalar(0);
}

/// Bound violation of A z, max over rows (0 when feasible).
template <typename Scalar>
Scalar qp_primal_violation(const QPProblem<Scalar>& qp,
                           const Vector<Scalar>& z) {
  if (qp.A.rows() == 0) return 0;
  const Vector<Scalar> az = qp.A * z;
  Scalar v = 0;
  for (Eigen::Index i = 0; i < az.size(); ++i) {
    v = std::max(v, qp.lo(i) - az(i));
    v = std::max(v, az(i) - qp.hi(i));
  }
  return v;
}

/// Reusable solver state: the equilibrated problem and the cached
/// factorization. H and A are fixed at construction; f and the bounds may be
/// replaced between solves, which keeps the factorization.
template <typename Scalar = double>
class QPSolver {
 public:
  QPSolver(const QPProblem<Scalar>& qp, const QPSettings& settings = {})
      : settings_(settings) {
    qp.validate();
    if (!(settings.sigma > 0) || !(settings.rho > 0) ||
        !(settings.alpha > 0 && settings.alpha < 2)) {
      throw InvalidParameter("QPSettings: need rho > 0, sigma > 0, alpha in (0,2)");
    }
    n_ = qp.num_vars();
    m_ = qp.num_constraints();
    H_ = qp.H;
    H_orig_ = qp.H;
    A_ = qp.A.rows() ? qp.A : Matrix<Scalar>::Zero(0, n_);
    equilibrate();
    update_vectors(qp.f, qp.lo, qp.hi);
    rho_ = Scalar(settings_.rho);
    factorize();
  }

  /// Replace the linear term and bounds. Shapes must match the original.
  void update_vectors(const Vector<Scalar>& f, const Vector<Scalar>& lo,
                      const Vector<Scalar>& hi) {
    if (f.size() != n_ || lo.size() != m_ || hi.size() != m_) {
      throw DimensionError("QPSolver::update_vectors: size mismatch");
    }
    f_orig_ = f;
    lo_orig_ = lo;
    hi_orig_ = hi;
    f_ = cost_scale_ * D_.cwiseProduct(f);
    lo_ = E_.cwiseProduct(lo);
    hi_ = E_.cwiseProduct(hi);
    const Vector<Scalar> old_kind = row_kind_;
    classify_rows();
    if (old_kind.size() == row_kind_.size() && old_kind != row_kind_ &&
        ldlt_ready_) {
      factorize();
    }
  }

  /// Solve from the given warm start (unscaled primal z, dual y), or from
  /// zero.
  QPSolution<Scalar> solve(const Vector<Scalar>* z_warm = nullptr,
                           const Vector<Scalar>* y_warm = nullptr) {
    QPSolution<Scalar> sol;
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (lo_orig_(i) > hi_orig_(i)) {
        sol.status = QPStatus::infeasible;
        sol.z_star = Vector<Scalar>::Zero(n_);
        sol.y_dual = Vector<Scalar>::Zero(m_);
        return sol;
      }
    }

    Vector<Scalar> x = Vector<Scalar>::Zero(n_);
    Vector<Scalar> y = Vector<Scalar>::Zero(m_);
    if (z_warm && z_warm->size() == n_) x = D_.cwiseInverse().cwiseProduct(*z_warm);
    if (y_warm && y_warm->size() == m_) {
      y = cost_scale_ * E_.cwiseInverse().cwiseProduct(*y_warm);
    }
    Vector<Scalar> z = project(A_ * x);

    const Scalar sigma = Scalar(settings_.sigma);
    const Scalar alpha = Scalar(settings_.alpha);
    Vector<Scalar> rhs(n_), x_tilde(n_), z_tilde(m_), z_next(m_);

    Residuals res{};
    int iter = 0;
    bool converged = false;
    for (iter = 1; iter <= settings_.max_iter; ++iter) {
      rhs = sigma * x - f_;
      if (m_ > 0) rhs += A_.transpose() * (rho_vec_.cwiseProduct(z) - y);
      x_tilde = factor_.solve(rhs);
      z_tilde = A_ * x_tilde;

      const Vector<Scalar> x_next = alpha * x_tilde + (Scalar(1) - alpha) * x;
      const Vector<Scalar> z_relaxed = alpha * z_tilde + (Scalar(1) - alpha) * z;
      z_next = project(z_relaxed + rho_vec_.cwiseInverse().cwiseProduct(y));
      y += rho_vec_.cwiseProduct(z_relaxed - z_next);
      x = x_next;
      z = z_next;

      res = residuals(x, z, y);
      if (res.primal <= res.eps_primal && res.dual <= res.eps_dual) {
        converged = true;
        break;
      }
      if (settings_.adaptive_rho &&
          iter % settings_.adaptive_rho_interval == 0) {
        adapt_rho(res);
      }
    }
    sol.iterations = std::min(iter, settings_.max_iter);

    sol.z_star = D_.cwiseProduct(x);
    sol.y_dual = E_.cwiseProduct(y) / cost_scale_;
    sol.primal_residual = res.primal;
    sol.dual_residual = res.dual;
    sol.status = converged ? QPStatus::optimal : QPStatus::max_iter;

    if (settings_.polish) {
      if (auto polished = polish(z, y)) {
        if (polished->primal_residual <= std::max(res.primal, res.eps_primal) &&
            polished->dual_residual <= std::max(res.dual, res.eps_dual)) {
          polished->iterations = sol.iterations;
          if (!converged) {
            polished->status = (polished->primal_residual <= res.eps_primal &&
                                polished->dual_residual <= res.eps_dual)
                                   ? QPStatus::optimal
                                   : QPStatus::max_iter;
          }
          sol = *polished;
        }
      }
    }
    sol.objective = Scalar(0.5) * sol.z_star.dot(H_orig_ * sol.z_star) +
                    f_orig_.dot(sol.z_star);
    return sol;
  }

  Scalar rho() const { return rho_; }

 private:
  struct Residuals {
    Scalar primal, dual, eps_primal, eps_dual;
    Scalar ax_norm, z_norm, hx_norm, aty_norm, f_norm;
  };

  static Scalar inf_norm(const Vector<Scalar>& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : Scalar(0);
  }

  void equilibrate() {
    D_ = Vector<Scalar>::Ones(n_);
    E_ = Vector<Scalar>::Ones(m_);
    cost_scale_ = 1;
    const Scalar lo_clip = 1e-4, hi_clip = 1e4;
    auto safe = [&](Scalar nrm) {
      if (nrm < lo_clip) return Scalar(1);
      return std::clamp(Scalar(1) / std::sqrt(nrm), Scalar(1) / hi_clip,
                        hi_clip);
    };
    for (int it = 0; it < settings_.scaling_iters; ++it) {
      Vector<Scalar> d(n_), e(m_);
      for (Eigen::Index j = 0; j < n_; ++j) {
        Scalar c = H_.col(j).cwiseAbs().maxCoeff();
        if (m_ > 0) c = std::max(c, A_.col(j).cwiseAbs().maxCoeff());
        d(j) = safe(c);
      }
      for (Eigen::Index i = 0; i < m_; ++i) {
        e(i) = safe(A_.row(i).cwiseAbs().maxCoeff());
      }
      H_ = d.asDiagonal() * H_ * d.asDiagonal();
      if (m_ > 0) A_ = e.asDiagonal() * A_ * d.asDiagonal();
      D_ = D_.cwiseProduct(d);
      E_ = E_.cwiseProduct(e);
    }
    // Cost scaling uses H only so the factorization stays valid when f
    // changes between solves.
    Scalar mean_col = 0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      mean_col += H_.col(j).cwiseAbs().maxCoeff();
    }
    mean_col = n_ ? mean_col / Scalar(n_) : Scalar(1);
    cost_scale_ = mean_col < lo_clip
                      ? Scalar(1)
                      : std::clamp(Scalar(1) / mean_col, Scalar(1) / hi_clip,
                                   hi_clip);
    H_ *= cost_scale_;
  }

  // 0 = inequality, 1 = equality, 2 = free.
  void classify_rows() {
    row_kind_.resize(m_);
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (lo_(i) == hi_(i)) {
        row_kind_(i) = 1;
      } else if (lo_(i) == -inf && hi_(i) == inf) {
        row_kind_(i) = 2;
      } else {
        row_kind_(i) = 0;
      }
    }
  }

  void build_rho_vec() {
    rho_vec_.resize(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (row_kind_(i) == 1) {
        rho_vec_(i) = Scalar(1e3) * rho_;
      } else if (row_kind_(i) == 2) {
        rho_vec_(i) = Scalar(1e-6);
      } else {
        rho_vec_(i) = rho_;
      }
    }
  }

  void factorize() {
    build_rho_vec();
    Matrix<Scalar> kkt = H_;
    kkt.diagonal().array() += Scalar(settings_.sigma);
    if (m_ > 0) kkt += A_.transpose() * rho_vec_.asDiagonal() * A_;
    factor_.compute(kkt);
    if (factor_.info() != Eigen::Success) {
      throw NumericalError("QPSolver: reduced KKT matrix not positive definite "
                           "(is H PSD?)");
    }
    ldlt_ready_ = true;
  }

  Vector<Scalar> project(const Vector<Scalar>& v) const {
    return v.cwiseMax(lo_).cwiseMin(hi_);
  }

  Residuals residuals(const Vector<Scalar>& x, const Vector<Scalar>& z,
                      const Vector<Scalar>& y) const {
    Residuals r{};
    const Vector<Scalar> einv = E_.cwiseInverse();
    const Vector<Scalar> dinv = D_.cwiseInverse();
    const Vector<Scalar> ax = A_ * x;
    const Vector<Scalar> hx = H_ * x;
    const Vector<Scalar> aty = m_ ? Vector<Scalar>(A_.transpose() * y)
                                  : Vector<Scalar>(Vector<Scalar>::Zero(n_));
    r.primal = inf_norm(einv.cwiseProduct(ax - z));
    r.dual = inf_norm(dinv.cwiseProduct(hx + f_ + aty)) / cost_scale_;
    r.ax_norm = inf_norm(einv.cwiseProduct(ax));
    r.z_norm = inf_norm(einv.cwiseProduct(z));
    r.hx_norm = inf_norm(dinv.cwiseProduct(hx)) / cost_scale_;
    r.aty_norm = inf_norm(dinv.cwiseProduct(aty)) / cost_scale_;
    r.f_norm = inf_norm(dinv.cwiseProduct(f_)) / cost_scale_;
    r.eps_primal = Scalar(settings_.eps_abs) +
                   Scalar(settings_.eps_rel) * std::max(r.ax_norm, r.z_norm);
    r.eps_dual =
        Scalar(settings_.eps_abs) +
        Scalar(settings_.eps_rel) * std::max({r.hx_norm, r.aty_norm, r.f_norm});
    return r;
  }

  void adapt_rho(const Residuals& r) {
    const Scalar tiny = std::numeric_limits<Scalar>::min();
    const Scalar prim_rel = r.primal / std::max({r.ax_norm, r.z_norm, tiny});
    const Scalar dual_rel =
        r.dual / std::max({r.hx_norm, r.aty_norm, r.f_norm, tiny});
    if (!(prim_rel > 0) || !(dual_rel > 0)) return;
    const Scalar rho_new = std::clamp(rho_ * std::sqrt(prim_rel / dual_rel),
                                      Scalar(1e-6), Scalar(1e6));
    const Scalar tol = Scalar(settings_.adaptive_rho_tolerance);
    if (rho_new > rho_ * tol || rho_new < rho_ / tol) {
      rho_ = rho_new;
      factorize();
    }
  }

  /// Active-set KKT solve in the scaled space with iterative refinement.
  std::optional<QPSolution<Scalar>> polish(const Vector<Scalar>& z,
                                           const Vector<Scalar>& y) const {
    std::vector<Eigen::Index> act;
    std::vector<int> side;  // -1 lower, +1 upper, 0 equality
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (row_kind_(i) == 1) {
        act.push_back(i);
        side.push_back(0);
      } else if (z(i) - lo_(i) < -y(i)) {
        act.push_back(i);
        side.push_back(-1);
      } else if (hi_(i) - z(i) < y(i)) {
        act.push_back(i);
        side.push_back(1);
      }
    }
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    Matrix<Scalar> a_act(na, n_);
    Vector<Scalar> b_act(na);
    for (Eigen::Index k = 0; k < na; ++k) {
      const auto i = act[static_cast<std::size_t>(k)];
      a_act.row(k) = A_.row(i);
      b_act(k) = side[static_cast<std::size_t>(k)] > 0 ? hi_(i) : lo_(i);
    }
    const Scalar delta = Scalar(1e-9);
    Matrix<Scalar> kkt = Matrix<Scalar>::Zero(n_ + na, n_ + na);
    kkt.topLeftCorner(n_, n_) = H_;
    kkt.topRightCorner(n_, na) = a_act.transpose();
    kkt.bottomLeftCorner(na, n_) = a_act;
    Matrix<Scalar> kkt_reg = kkt;
    kkt_reg.topLeftCorner(n_, n_).diagonal().array() += delta;
    kkt_reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    Eigen::PartialPivLU<Matrix<Scalar>> lu(kkt_reg);
    Vector<Scalar> rhs(n_ + na);
    rhs << -f_, b_act;
    Vector<Scalar> sol = lu.solve(rhs);
    for (int it = 0; it < 5; ++it) sol += lu.solve(rhs - kkt * sol);
    if (!sol.allFinite()) return std::nullopt;

    Vector<Scalar> xp = sol.head(n_);
    Vector<Scalar> yp = Vector<Scalar>::Zero(m_);
    for (Eigen::Index k = 0; k < na; ++k) {
      const auto i = act[static_cast<std::size_t>(k)];
      const Scalar yk = sol(n_ + k);
      const int s = side[static_cast<std::size_t>(k)];
      // Multiplier sign must match the active side.
      if ((s < 0 && yk > 0) || (s > 0 && yk < 0)) return std::nullopt;
      yp(i) = yk;
    }
    const Vector<Scalar> zp = A_ * xp;
    const Residuals r = residuals(xp, project(zp), yp);

    QPSolution<Scalar> out;
    out.z_star = D_.cwiseProduct(xp);
    out.y_dual = E_.cwiseProduct(yp) / cost_scale_;
    out.primal_residual = r.primal;
    out.dual_residual = r.dual;
    out.status = QPStatus::optimal;
    out.polished = true;
    return out;
  }

  QPSettings settings_;
  Eigen::Index n_ = 0, m_ = 0;
  Matrix<Scalar> H_, A_, H_orig_;
  Vector<Scalar> f_, lo_, hi_;
  Vector<Scalar> f_orig_, lo_orig_, hi_orig_;
  Vector<Scalar> D_, E_;
  Scalar cost_scale_ = 1;
  Scalar rho_ = 0.1;
  Vector<Scalar> rho_vec_;
  Vector<Scalar> row_kind_;
  Eigen::LLT<Matrix<Scalar>> factor_;
  bool ldlt_ready_ = false;
};

/// One-shot solve. Deterministic for identical inputs and settings.
template <typename Scalar>
QPSolution<Scalar> solve_qp(const QPProblem<Scalar>& qp,
                            const QPSettings& settings = {}) {
  QPSolver<Scalar> solver(qp, settings);
  return solver.solve();
}

}  // namespace bemctl
