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
/// Small dense helpers shared by the numerical modules.

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "bemctl/errors.hpp"

namespace bemctl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

template <typename Derived>
typename Derived::Scalar asymmetry(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return std::numeric_limits<Scalar>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(symmetrized(m),
                                                   Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.size() == 0 || m.allFinite();
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
/// The series is summed until the next term drops below `tol` relative to
/// the partial sum (in the max norm) after scaling the argument below 1/2.
template <typename Derived>
Matrix<typename Derived::Scalar> expm(const Eigen::MatrixBase<Derived>& a,
                                      typename Derived::Scalar tol = 1e-16) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) throw DimensionError("expm: matrix not square");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix<Scalar>(0, 0);
  if (!all_finite(a)) throw InvalidParameter("expm: non-finite entry");

  const Scalar norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > Scalar(0.5)) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / Scalar(0.5))));
  }
  const Matrix<Scalar> scaled = a / std::ldexp(Scalar(1), squarings);

  Matrix<Scalar> sum = Matrix<Scalar>::Identity(n, n);
  Matrix<Scalar> term = Matrix<Scalar>::Identity(n, n);
  for (int k = 1; k < 64; ++k) {
    term = (term * scaled) / Scalar(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() <= tol * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) sum = (sum * sum).eval();
  return sum;
}

/// `A_d = e^{A_c dt}` and `B_d = \int_0^dt e^{A_c s} ds B_c` from the
/// exponential of the augmented block matrix [[A_c, B_c], [0, 0]] dt.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> zoh_discretize(
    const Matrix<Scalar>& a_c, const Matrix<Scalar>& b_c, Scalar dt) {
  const Eigen::Index n = a_c.rows();
  const Eigen::Index m = b_c.cols();
  if (a_c.cols() != n || b_c.rows() != n) {
    throw DimensionError("zoh_discretize: A_c must be n x n and B_c n x m");
  }
  Matrix<Scalar> aug = Matrix<Scalar>::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a_c * dt;
  aug.topRightCorner(n, m) = b_c * dt;
  const Matrix<Scalar> e = expm(aug);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace bemctl
