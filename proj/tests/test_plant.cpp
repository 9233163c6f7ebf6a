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

#include "bemctl/plant.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using bemctl::Matrix;
using bemctl::Vector;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

TEST_CASE("adiabatic zone integrates heater power") {
  bemctl::ThermalZoneParams p;
  p.thermal_resistance = std::numeric_limits<double>::infinity();
  p.thermal_capacitance = 1e6;
  const auto m = bemctl::build_thermal_model(p, 900.0);
  CHECK(m.A(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  const auto s = bemctl::step_plant(m, Vec::Constant(1, 20.0), Vec::Constant(1, 1000.0));
  CHECK(s.x_next(0) - 20.0 == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(m.E(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("zone relaxes monotonically to ambient") {
  bemctl::ThermalZoneParams p;
  const auto m = bemctl::build_thermal_model(p, 900.0);
  double t = 25.0, prev_gap = 20.0;
  for (int k = 0; k < 200; ++k) {
    auto s = bemctl::step_plant(m, Vec::Constant(1, t), Vec::Zero(1),
                                std::optional<Vec>(m.E * Vec::Constant(1, 5.0)));
    t = s.x_next(0);
    const double gap = t - 5.0;
    CHECK(gap >= 0);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(t == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("thermal ZOH matches scalar exponential") {
  bemctl::ThermalZoneParams p;
  p.thermal_resistance = 0.01;
  p.thermal_capacitance = 1e6;
  const auto m = bemctl::build_thermal_model(p, 900.0);
  const double a = oracle::exp_series(-0.09);
  CHECK(std::abs(m.A(0, 0) - a) <= 1e-10);
  // B = R (1 - a) for the heater input, E = 1 - a for ambient.
  CHECK(std::abs(m.B(0, 0) - 0.01 * (1 - a)) <= 1e-14);
  CHECK(std::abs(m.E(0, 0) - (1 - a)) <= 1e-12);
}

TEST_CASE("thermal ZOH consistency over a parameter grid") {
  for (double r : {0.002, 0.01, 0.05}) {
    for (double c : {2e5, 1e6, 5e6}) {
      for (double dt : {60.0, 900.0, 3600.0}) {
        bemctl::ThermalZoneParams p;
        p.thermal_resistance = r;
        p.thermal_capacitance = c;
        const auto m = bemctl::build_thermal_model(p, dt);
        CHECK(std::abs(m.A(0, 0) - oracle::exp_series(-dt / (r * c))) <= 1e-10);
      }
    }
  }
}

TEST_CASE("invalid thermal and battery parameters") {
  bemctl::ThermalZoneParams p;
  p.thermal_resistance = 0;
  CHECK_THROWS_AS(bemctl::build_thermal_model(p, 900.0), bemctl::InvalidParameter);
  p = {};
  p.thermal_capacitance = -1;
  CHECK_THROWS_AS(bemctl::build_thermal_model(p, 900.0), bemctl::InvalidParameter);
  p = {};
  CHECK_THROWS_AS(bemctl::build_thermal_model(p, 0.0), bemctl::InvalidParameter);
  bemctl::BatteryParams b;
  b.charge_efficiency = 1.2;
  CHECK_THROWS_AS(bemctl::build_battery_model(b, 900.0), bemctl::InvalidParameter);
  b = {};
  b.power_min = 10;
  CHECK_THROWS_AS(bemctl::build_battery_model(b, 900.0), bemctl::InvalidParameter);
}

TEST_CASE("battery SOC arithmetic") {
  bemctl::BatteryParams b;
  b.energy_capacity = 96000;
  b.charge_efficiency = 1;
  b.discharge_efficiency = 1;
  const auto m = bemctl::build_battery_model(b, 900.0);
  const auto s = bemctl::step_plant(m, Vec::Constant(1, 50.0), Vec::Constant(1, 9600.0));
  CHECK(s.x_next(0) - 50.0 == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(bemctl::step_battery(b, 50.0, 9600.0, 900.0) - 50.0 == doctest::Approx(2.5));
  CHECK(bemctl::step_battery(b, 50.0, 0.0, 900.0) == 50.0);
}

TEST_CASE("battery round trip loses charge") {
  bemctl::BatteryParams b;
  b.charge_efficiency = 0.95;
  b.discharge_efficiency = 0.95;
  double soc = 50.0;
  soc = bemctl::step_battery(b, soc, 10000.0, 900.0);
  soc = bemctl::step_battery(b, soc, -10000.0, 900.0);
  CHECK(soc < 50.0);
}

TEST_CASE("battery energy accounting with unit efficiency") {
  oracle::Gen g(7);
  bemctl::BatteryParams b;
  b.charge_efficiency = 1;
  b.discharge_efficiency = 1;
  const double dt = 900;
  for (int trial = 0; trial < 20; ++trial) {
    double soc = 50, energy_ws = 0;
    for (int k = 0; k < 96; ++k) {
      const double u = g.uniform(-20000, 20000);
      soc = bemctl::step_battery(b, soc, u, dt);
      energy_ws += u * dt;
    }
    const double from_soc = b.energy_capacity * (soc - 50) / 100 * 3600;
    CHECK(std::abs(from_soc - energy_ws) <= 1e-9 * std::max(1.0, std::abs(energy_ws)) + 1e-6);
  }
}

TEST_CASE("step_plant arithmetic") {
  const auto m = bemctl::make_lti<double>(Mat::Identity(2, 2), Mat::Identity(2, 2),
                                          Mat::Identity(2, 2), Mat::Zero(2, 2), 1.0);
  auto s = bemctl::step_plant(m, Vec::Zero(2), Vec::Zero(2), std::optional<Vec>(Vec::Zero(2)));
  CHECK(s.x_next.isZero());
  CHECK(s.y.isZero());
  s = bemctl::step_plant(m, Vec{{1.0, 2.0}}, Vec{{3.0, 4.0}});
  CHECK(s.x_next(0) == 4.0);
  CHECK(s.x_next(1) == 6.0);
  CHECK_THROWS_AS(bemctl::step_plant(m, Vec::Zero(3), Vec::Zero(2)), bemctl::DimensionError);
}

TEST_CASE("step_plant matches a matrix-product recurrence") {
  oracle::Gen g(11);
  const auto m = bemctl::make_lti<double>(g.stable(3), g.matrix(3, 2), g.matrix(2, 3),
                                          g.matrix(2, 2), 1.0);
  Vec x = g.vector(3), xo = x;
  for (int k = 0; k < 10; ++k) {
    const Vec u = g.vector(2);
    const auto s = bemctl::step_plant(m, x, u);
    Vec yo(2), xn(3);
    for (int i = 0; i < 2; ++i) {
      yo(i) = 0;
      for (int j = 0; j < 3; ++j) yo(i) += m.C(i, j) * xo(j);
      for (int j = 0; j < 2; ++j) yo(i) += m.D(i, j) * u(j);
    }
    for (int i = 0; i < 3; ++i) {
      xn(i) = 0;
      for (int j = 0; j < 3; ++j) xn(i) += m.A(i, j) * xo(j);
      for (int j = 0; j < 2; ++j) xn(i) += m.B(i, j) * u(j);
    }
    CHECK((s.y - yo).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.x_next - xn).cwiseAbs().maxCoeff() <= 1e-12);
    x = s.x_next;
    xo = xn;
  }
}

TEST_CASE("step_plant is linear") {
  oracle::Gen g(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(1, 5), mm = g.integer(1, 3), p = g.integer(1, 3);
    const auto m = bemctl::make_lti<double>(g.matrix(n, n), g.matrix(n, mm), g.matrix(p, n),
                                            g.matrix(p, mm), 1.0);
    const Vec x1 = g.vector(n), x2 = g.vector(n), u1 = g.vector(mm), u2 = g.vector(mm);
    const auto a = bemctl::step_plant(m, Vec(x1 + x2), Vec(u1 + u2));
    const auto b = bemctl::step_plant(m, x1, u1);
    const auto c = bemctl::step_plant(m, x2, u2);
    CHECK((a.x_next - b.x_next - c.x_next).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.y - b.y - c.y).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("pwm edge commands") {
  auto s = bemctl::pwm_encode(0.0, 1000.0, 15);
  CHECK(s.on_slots() == 0);
  CHECK(s.duty == 0.0);
  CHECK(bemctl::pwm_realized_power(s, 1000.0) == 0.0);
  s = bemctl::pwm_encode(500.0, 500.0, 15);
  CHECK(s.on_slots() == 15);
  CHECK(s.duty == 1.0);
  CHECK(bemctl::pwm_realized_power(s, 500.0) == 500.0);
  CHECK_THROWS_AS(bemctl::pwm_encode(-1.0, 1000.0, 15), bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::pwm_encode(1001.0, 1000.0, 15), bemctl::InvalidParameter);
  CHECK_THROWS_AS(bemctl::pwm_encode(1.0, 1000.0, 0), bemctl::InvalidParameter);
}

TEST_CASE("pwm slot count matches exhaustive search") {
  const auto s = bemctl::pwm_encode(370.0, 1000.0, 15);
  CHECK(s.on_slots() == 6);
  CHECK(s.duty == doctest::Approx(0.4));
  CHECK(bemctl::pwm_realized_power(s, 1000.0) == doctest::Approx(400.0));
  for (int n : {1, 4, 15, 60}) {
    for (int i = 0; i <= 1000; ++i) {
      const double u = i * 1.0;  // grid over [0, 1000]
      const auto e = bemctl::pwm_encode(u, 1000.0, n);
      int best = 0;
      double best_err = 1e300;
      for (int c = 0; c <= n; ++c) {
        const double err = std::abs(static_cast<double>(c) / n - u / 1000.0);
        if (err < best_err - 1e-15) {
          best_err = err;
          best = c;
        }
      }
      // Ties at half-slots may go either way; the error must match the best.
      const double err = std::abs(e.duty - u / 1000.0);
      CHECK(err <= best_err + 1e-12);
      if (std::abs(err - best_err) > 1e-12) CHECK(e.on_slots() == best);
      CHECK(std::abs(bemctl::pwm_realized_power(e, 1000.0) - u) <= 1000.0 / (2 * n) + 1e-9);
      // Contiguous from slot 0 and duty consistent with the pattern.
      for (int k = 0; k < n; ++k) CHECK(e.pattern[static_cast<std::size_t>(k)] == (k < e.on_slots()));
      CHECK(e.duty == static_cast<double>(e.on_slots()) / n);
    }
  }
}

TEST_CASE("model validation catches shapes") {
  CHECK_THROWS_AS(bemctl::make_lti<double>(Mat::Zero(2, 3), Mat::Zero(2, 1), Mat::Zero(1, 2),
                                           Mat::Zero(1, 1), 1.0),
                  bemctl::DimensionError);
  CHECK_THROWS_AS(bemctl::make_lti<double>(Mat::Zero(2, 2), Mat::Zero(2, 1), Mat::Zero(1, 2),
                                           Mat::Zero(1, 1), -1.0),
                  bemctl::InvalidParameter);
}
