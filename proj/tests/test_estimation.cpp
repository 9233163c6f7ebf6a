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

#include "bemctl/estimation.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

bemctl::KalmanFilter<double> random_filter(oracle::Gen& g, int n, int p) {
  auto model = bemctl::make_lti<double>(g.stable(n, 0.95), g.matrix(n, 1), g.matrix(p, n),
                                        Mat::Zero(p, 1), 1.0);
  return bemctl::make_kalman_filter<double>(model, 0.1 * g.spd(n, 0.01), g.spd(p, 0.05),
                                            g.vector(n), g.spd(n, 0.1));
}

void check_cov(const Mat& p) {
  CHECK(bemctl::asymmetry(p) <= 1e-9);
  CHECK(oracle::min_eig(p) >= -1e-9);
}

}  // namespace

TEST_CASE("identity propagation leaves the estimate alone") {
  auto model = bemctl::make_lti<double>(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                        Mat::Zero(2, 1), 1.0);
  oracle::Gen g(1);
  const Mat p0 = g.spd(2);
  const Vec x0 = g.vector(2);
  auto kf = bemctl::make_kalman_filter<double>(model, Mat::Zero(2, 2), Mat::Identity(2, 2), x0, p0);
  const auto out = bemctl::kf_predict(kf, Vec::Constant(1, 3.0));
  CHECK((out.x_hat - x0).norm() == 0.0);
  CHECK((out.P - kf.P).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("memoryless prediction returns the process noise") {
  auto model = bemctl::make_lti<double>(Mat::Zero(3, 3), Mat::Ones(3, 1), Mat::Identity(3, 3),
                                        Mat::Zero(3, 1), 1.0);
  oracle::Gen g(2);
  const Mat q = g.spd(3);
  auto kf = bemctl::make_kalman_filter<double>(model, q, Mat::Identity(3, 3), g.vector(3), g.spd(3));
  const auto out = bemctl::kf_predict(kf, Vec::Zero(1));
  CHECK((out.P - bemctl::symmetrized(q)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prediction matches the direct recurrence") {
  oracle::Gen g(3);
  auto kf = random_filter(g, 4, 2);
  Vec x = kf.x_hat;
  Mat p = kf.P;
  for (int k = 0; k < 20; ++k) {
    const Vec u = g.vector(1);
    kf = bemctl::kf_predict(kf, u);
    x = kf.model.A * x + kf.model.B * u;
    p = kf.model.A * p * kf.model.A.transpose() + kf.Q_proc;
    p = 0.5 * (p + p.transpose());
    CHECK((kf.x_hat - x).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((kf.P - p).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK_THROWS_AS(bemctl::kf_predict(kf, Vec::Zero(2)), bemctl::DimensionError);
}

TEST_CASE("gain limits") {
  auto model = bemctl::make_lti<double>(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                        Mat::Zero(2, 1), 1.0);
  auto kf = bemctl::make_kalman_filter<double>(model, Mat::Zero(2, 2), 1e12 * Mat::Identity(2, 2),
                                               Vec::Zero(2), Mat::Identity(2, 2));
  CHECK(bemctl::kf_gain(kf).cwiseAbs().maxCoeff() <= 1e-9);
  kf.R_meas.setZero();
  CHECK((bemctl::kf_gain(kf) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("singular innovation covariance is reported") {
  auto model = bemctl::make_lti<double>(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                        Mat::Zero(2, 1), 1.0);
  auto kf = bemctl::make_kalman_filter<double>(model, Mat::Zero(2, 2), Mat::Zero(2, 2),
                                               Vec::Zero(2), Mat::Zero(2, 2));
  CHECK_THROWS_AS(bemctl::kf_gain(kf), bemctl::NumericalError);
  CHECK_THROWS_AS(bemctl::kf_update_joseph(kf, Vec::Zero(2)), bemctl::NumericalError);
}

TEST_CASE("invalid covariances are rejected") {
  auto model = bemctl::make_lti<double>(Mat::Identity(2, 2), Mat::Zero(2, 1), Mat::Identity(2, 2),
                                        Mat::Zero(2, 1), 1.0);
  Mat bad = Mat::Identity(2, 2);
  bad(0, 0) = -1;
  CHECK_THROWS_AS(bemctl::make_kalman_filter<double>(model, bad, Mat::Identity(2, 2), Vec::Zero(2),
                                                     Mat::Identity(2, 2)),
                  bemctl::InvalidParameter);
  Mat asym = Mat::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(bemctl::make_kalman_filter<double>(model, Mat::Identity(2, 2), asym,
                                                     Vec::Zero(2), Mat::Identity(2, 2)),
                  bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::make_kalman_filter<double>(model, Mat::Identity(3, 3),
                                                     Mat::Identity(2, 2), Vec::Zero(2),
                                                     Mat::Identity(2, 2)),
                  bemctl::DimensionError);
}

TEST_CASE("gain solves K S = P H^T") {
  oracle::Gen g(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto kf = random_filter(g, g.integer(1, 6), g.integer(1, 3));
    const Mat k = bemctl::kf_gain(kf);
    const Mat s = kf.H() * kf.P * kf.H().transpose() + kf.R_meas;
    CHECK((k * s - kf.P * kf.H().transpose()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("zero gain leaves the prior untouched") {
  oracle::Gen g(5);
  auto kf = random_filter(g, 3, 2);
  const auto out = bemctl::kf_update_with_gain(kf, g.vector(2), Mat(Mat::Zero(3, 2)));
  CHECK((out.x_hat - kf.x_hat).norm() == 0.0);
  CHECK((out.P - kf.P).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("Joseph form equals the short form at the optimal gain") {
  oracle::Gen g(6);
  for (int seed = 0; seed < 100; ++seed) {
    const int n = g.integer(1, 6);
    auto kf = random_filter(g, n, g.integer(1, 3));
    const auto out = bemctl::kf_update_joseph(kf, g.vector(kf.model.p()));
    const Mat short_form = (Mat::Identity(n, n) - out.K * kf.H()) * kf.P;
    CHECK((out.P - short_form).cwiseAbs().maxCoeff() <= 1e-9);
    check_cov(out.P);
    CHECK(out.P.trace() <= kf.P.trace() + 1e-12);
  }
}

TEST_CASE("Joseph form stays PSD under perturbed gains") {
  oracle::Gen g(7);
  int short_form_broken = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const int n = g.integer(1, 6);
    auto kf = random_filter(g, n, g.integer(1, 3));
    Mat k = bemctl::kf_gain(kf) * 1.1;
    if (seed % 2 == 1) k += g.matrix(k.rows(), k.cols());  // arbitrary gain
    const auto out = bemctl::kf_update_with_gain(kf, g.vector(kf.model.p()), k);
    check_cov(out.P);
    const Mat short_form = (Mat::Identity(n, n) - k * kf.H()) * kf.P;
    if (oracle::min_eig(short_form) < -1e-9 || bemctl::asymmetry(short_form) > 1e-9) {
      ++short_form_broken;
    }
  }
  // The shortcut loses symmetry or definiteness on some of these.
  CHECK(short_form_broken > 0);
}

TEST_CASE("noiseless plant: estimate converges to the state") {
  oracle::Gen g(8);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(1, 4);
    auto model = bemctl::make_lti<double>(g.stable(n, 0.9), g.matrix(n, 1), g.matrix(1, n),
                                          Mat::Zero(1, 1), 1.0);
    // Observability matrix rank, by SVD.
    Mat obs(n, n);
    Mat cap = model.C;
    for (int i = 0; i < n; ++i) {
      obs.row(i) = cap;
      cap = cap * model.A;
    }
    if (oracle::svd_rank(obs, 1e-6) < n) continue;
    ++checked;
    auto kf = bemctl::make_kalman_filter<double>(model, Mat::Zero(n, n), 1e-14 * Mat::Identity(1, 1),
                                                 Vec::Zero(n), 100 * Mat::Identity(n, n));
    Vec x = g.vector(n);
    for (int k = 0; k < n; ++k) {
      kf = bemctl::kf_update_joseph(kf, model.C * x);
      const Vec u = g.vector(1);
      kf = bemctl::kf_predict(kf, u);
      x = model.A * x + model.B * u;
    }
    kf = bemctl::kf_update_joseph(kf, model.C * x);
    const double scale = std::max(1.0, x.norm());
    CHECK((kf.x_hat - x).norm() <= 1e-6 * scale);
  }
  CHECK(checked >= 10);
}
