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
/// Linear Kalman filter whose measurement update uses the Joseph form
///
///   P+ = (I - K H) P- (I - K H)^T + K R K^T
///
/// which stays symmetric positive semidefinite for any gain K, not only the
/// optimal one. The measurement map H is the plant output matrix C.
/// Operations are functional: they take a filter by const reference and
/// return the updated value.

#pragma once

#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bemctl/errors.hpp"
#include "bemctl/linalg.hpp"
#include "bemctl/plant.hpp"

namespace bemctl {

template <typename Scalar = double>
struct KalmanFilter {
  LTIModel<Scalar> model;
  Matrix<Scalar> Q_proc;
  Matrix<Scalar> R_meas;
  Vector<Scalar> x_hat;
  Matrix<Scalar> P;
  Matrix<Scalar> K;

  const Matrix<Scalar>& H() const { return model.C; }
};

template <typename Scalar>
void check_psd(const Matrix<Scalar>& m, const char* name, Scalar tol = 1e-9) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(name) + " must be square");
  }
  if (!all_finite(m)) throw InvalidParameter(std::string(name) + " not finite");
  if (asymmetry(m) > tol) {
    throw InvalidParameter(std::string(name) + " must be symmetric");
  }
  if (min_eigenvalue(m) < -tol) {
    throw InvalidParameter(std::string(name) + " must be positive semidefinite");
  }
}

/// Builds a filter. Q_proc and R_meas must be symmetric PSD.
template <typename Scalar = double>
KalmanFilter<Scalar> make_kalman_filter(LTIModel<Scalar> model,
                                        Matrix<Scalar> q_proc,
                                        Matrix<Scalar> r_meas,
                                        Vector<Scalar> x0, Matrix<Scalar> p0) {
  model.validate();
  const auto n = model.n();
  const auto p = model.p();
  if (q_proc.rows() != n || r_meas.rows() != p || x0.size() != n ||
      p0.rows() != n) {
    throw DimensionError("make_kalman_filter: Q_proc n x n, R_meas p x p, "
                         "x0 n, P0 n x n required");
  }
  check_psd<Scalar>(q_proc, "Q_proc");
  check_psd<Scalar>(r_meas, "R_meas");
  check_psd<Scalar>(p0, "P0");
  KalmanFilter<Scalar> kf{std::move(model), std::move(q_proc),
                          std::move(r_meas), std::move(x0),
                          symmetrized(p0), Matrix<Scalar>::Zero(n, p)};
  return kf;
}

/// Time update: x <- A x + B u (+ E w), P <- A P A^T + Q.
template <typename Scalar, typename DerivedU>
KalmanFilter<Scalar> kf_predict(const KalmanFilter<Scalar>& kf,
                                const Eigen::MatrixBase<DerivedU>& u,
                                const Vector<Scalar>& w = Vector<Scalar>()) {
  const auto& m = kf.model;
  if (u.size() != m.m()) throw DimensionError("kf_predict: input size != m");
  if (kf.x_hat.size() != m.n() || kf.P.rows() != m.n()) {
    throw DimensionError("kf_predict: state size != n");
  }
  KalmanFilter<Scalar> out = kf;
  out.x_hat = m.A * kf.x_hat + m.B * u;
  if (m.q() > 0 && w.size() > 0) {
    if (w.size() != m.q()) throw DimensionError("kf_predict: w size != q");
    out.x_hat += m.E * w;
  }
  out.P = symmetrized(m.A * kf.P * m.A.transpose() + kf.Q_proc);
  return out;
}

/// K = P H^T S^{-1}, S = H P H^T + R, via Cholesky of S (LDL^T fallback).
template <typename Scalar>
Matrix<Scalar> kf_gain(const KalmanFilter<Scalar>& kf) {
  const Matrix<Scalar>& h = kf.H();
  if (h.cols() != kf.P.rows() || kf.R_meas.rows() != h.rows()) {
    throw DimensionError("kf_gain: H/P/R shapes inconsistent");
  }
  const Matrix<Scalar> s = symmetrized(h * kf.P * h.transpose() + kf.R_meas);
  const Matrix<Scalar> pht = kf.P * h.transpose();
  const Scalar rcond_floor = std::numeric_limits<Scalar>::epsilon() * 10;

  // K S = P H^T  <=>  S K^T = H P^T = (P H^T)^T since S is symmetric.
  Eigen::LLT<Matrix<Scalar>> llt(s);
  if (llt.info() == Eigen::Success && llt.rcond() > rcond_floor) {
    return llt.solve(pht.transpose()).transpose();
  }
  Eigen::LDLT<Matrix<Scalar>> ldlt(s);
  const Scalar rc = ldlt.info() == Eigen::Success ? ldlt.rcond() : Scalar(0);
  if (!(rc > rcond_floor)) {
    throw NumericalError(
        "kf_gain: innovation covariance singular (rcond=" +
            std::to_string(static_cast<double>(rc)) + ")",
        static_cast<double>(rc));
  }
  return ldlt.solve(pht.transpose()).transpose();
}

/// Joseph-form covariance for an arbitrary gain.
template <typename Scalar>
Matrix<Scalar> joseph_covariance(const Matrix<Scalar>& p,
                                 const Matrix<Scalar>& k,
                                 const Matrix<Scalar>& h,
                                 const Matrix<Scalar>& r) {
  const auto n = p.rows();
  const Matrix<Scalar> ikh = Matrix<Scalar>::Identity(n, n) - k * h;
  return symmetrized(ikh * p * ikh.transpose() + k * r * k.transpose());
}

/// Measurement update with a caller-supplied gain.
template <typename Scalar, typename DerivedY>
KalmanFilter<Scalar> kf_update_with_gain(const KalmanFilter<Scalar>& kf,
                                         const Eigen::MatrixBase<DerivedY>& y,
                                         const Matrix<Scalar>& k) {
  const Matrix<Scalar>& h = kf.H();
  if (y.size() != h.rows()) throw DimensionError("kf_update: y size != p");
  if (k.rows() != kf.P.rows() || k.cols() != h.rows()) {
    throw DimensionError("kf_update: gain must be n x p");
  }
  KalmanFilter<Scalar> out = kf;
  out.K = k;
  out.x_hat = kf.x_hat + k * (y - h * kf.x_hat);
  out.P = joseph_covariance<Scalar>(kf.P, k, h, kf.R_meas);
  return out;
}

template <typename Scalar, typename DerivedY>
KalmanFilter<Scalar> kf_update_joseph(const KalmanFilter<Scalar>& kf,
                                      const Eigen::MatrixBase<DerivedY>& y) {
  return kf_update_with_gain(kf, y, kf_gain(kf));
}

}  // namespace bemctl
