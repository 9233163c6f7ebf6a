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
/// Discrete-time LTI plants for the two building case studies: a
/// first-order RC thermal zone and a state-of-charge integrator for a
/// stationary battery, plus PWM valve scheduling for the heater.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bemctl/errors.hpp"
#include "bemctl/linalg.hpp"

namespace bemctl {

/// x_{k+1} = A x_k + B u_k + E w_k,  y_k = C x_k + D u_k.
///
/// `E` maps measured (non-manipulated) disturbance inputs such as the
/// ambient temperature. It has zero columns for plants without one.
template <typename Scalar = double>
struct LTIModel {
  Matrix<Scalar> A;
  Matrix<Scalar> B;
  Matrix<Scalar> C;
  Matrix<Scalar> D;
  Matrix<Scalar> E;
  Scalar dt = 1;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }
  Eigen::Index q() const { return E.cols(); }

  void validate() const {
    if (A.rows() != A.cols()) {
      throw DimensionError("LTIModel: A must be square, got " +
                           shape_str(A.rows(), A.cols()));
    }
    if (B.rows() != n()) throw DimensionError("LTIModel: B rows != n");
    if (C.cols() != n()) throw DimensionError("LTIModel: C cols != n");
    if (D.rows() != p() || D.cols() != m()) {
      throw DimensionError("LTIModel: D must be p x m, got " +
                           shape_str(D.rows(), D.cols()));
    }
    if (E.rows() != n() && E.cols() != 0) {
      throw DimensionError("LTIModel: E rows != n");
    }
    if (!(dt > 0) || !std::isfinite(static_cast<double>(dt))) {
      throw InvalidParameter("LTIModel: dt must be positive and finite");
    }
    if (!all_finite(A) || !all_finite(B) || !all_finite(C) || !all_finite(D) ||
        !all_finite(E)) {
      throw InvalidParameter("LTIModel: non-finite entry");
    }
  }
};

template <typename Scalar = double>
LTIModel<Scalar> make_lti(Matrix<Scalar> a, Matrix<Scalar> b, Matrix<Scalar> c,
                          Matrix<Scalar> d, Scalar dt,
                          Matrix<Scalar> e = Matrix<Scalar>()) {
  if (e.size() == 0) e = Matrix<Scalar>::Zero(a.rows(), 0);
  LTIModel<Scalar> model{std::move(a), std::move(b), std::move(c),
                         std::move(d), std::move(e), dt};
  model.validate();
  return model;
}

struct ThermalZoneParams {
  double thermal_resistance = 0.01;   // K/W; +inf means adiabatic
  double thermal_capacitance = 1e6;   // J/K
  double heater_capacity = 5000.0;    // W
  std::vector<double> ambient_temp_profile{5.0};  // degC per step, cyclic

  void validate() const {
    if (!(thermal_resistance > 0)) {
      throw InvalidParameter("thermal_resistance must be > 0");
    }
    if (!(thermal_capacitance > 0) || !std::isfinite(thermal_capacitance)) {
      throw InvalidParameter("thermal_capacitance must be > 0 and finite");
    }
    if (!(heater_capacity > 0) || !std::isfinite(heater_capacity)) {
      throw InvalidParameter("heater_capacity must be > 0 and finite");
    }
    if (ambient_temp_profile.empty()) {
      throw InvalidParameter("ambient_temp_profile must not be empty");
    }
  }

  double ambient_at(std::size_t step) const {
    return ambient_temp_profile[step % ambient_temp_profile.size()];
  }
};

struct BatteryParams {
  double energy_capacity = 96000.0;  // Wh
  double charge_efficiency = 0.95;
  double discharge_efficiency = 0.95;
  double power_min = -20000.0;  // W, discharge
  double power_max = 20000.0;   // W, charge

  void validate() const {
    if (!(energy_capacity > 0) || !std::isfinite(energy_capacity)) {
      throw InvalidParameter("energy_capacity must be > 0");
    }
    if (!(power_min < 0) || !(power_max > 0)) {
      throw InvalidParameter("battery power limits must satisfy min < 0 < max");
    }
    auto in_unit = [](double e) { return e > 0 && e <= 1; };
    if (!in_unit(charge_efficiency) || !in_unit(discharge_efficiency)) {
      throw InvalidParameter("battery efficiencies must lie in (0, 1]");
    }
  }
};

/// Closed- or open-loop record. `states` has one more entry than `inputs`;
/// `outputs[k]` is the output at the time `inputs[k]` is applied.
template <typename Scalar = double>
struct Trajectory {
  std::vector<std::size_t> times;
  std::vector<Vector<Scalar>> inputs;
  std::vector<Vector<Scalar>> states;
  std::vector<Vector<Scalar>> outputs;

  bool consistent() const {
    return states.size() == inputs.size() + 1 &&
           outputs.size() == inputs.size() && times.size() == inputs.size();
  }
};

struct PWMSchedule {
  int n_slots = 1;
  std::vector<bool> pattern;
  double duty = 0.0;

  int on_slots() const {
    int on = 0;
    for (bool b : pattern) on += b ? 1 : 0;
    return on;
  }
};

/// Exact ZOH discretization of C dT/dt = (T_amb - T)/R + u.
/// Inputs: u = heating power [W]. Measured disturbance: w = T_amb [degC].
template <typename Scalar = double>
LTIModel<Scalar> build_thermal_model(const ThermalZoneParams& params,
                                     Scalar dt) {
  params.validate();
  if (!(dt > 0)) throw InvalidParameter("build_thermal_model: dt must be > 0");
  const Scalar rc_inv =
      Scalar(1) / (Scalar(params.thermal_resistance) *
                   Scalar(params.thermal_capacitance));
  Matrix<Scalar> a_c(1, 1);
  a_c(0, 0) = -rc_inv;
  Matrix<Scalar> b_c(1, 2);
  b_c(0, 0) = Scalar(1) / Scalar(params.thermal_capacitance);
  b_c(0, 1) = rc_inv;
  auto [a_d, bw_d] = zoh_discretize<Scalar>(a_c, b_c, dt);
  return make_lti<Scalar>(a_d, bw_d.leftCols(1), Matrix<Scalar>::Ones(1, 1),
                          Matrix<Scalar>::Zero(1, 1), dt, bw_d.rightCols(1));
}

/// SOC integrator in percent. The exported LTI form fixes the efficiency to
/// the charging value; `step_battery` applies the sign-dependent one.
template <typename Scalar = double>
LTIModel<Scalar> build_battery_model(const BatteryParams& params, Scalar dt) {
  params.validate();
  if (!(dt > 0)) throw InvalidParameter("build_battery_model: dt must be > 0");
  Matrix<Scalar> b(1, 1);
  b(0, 0) = Scalar(100) * Scalar(params.charge_efficiency) * dt /
            (Scalar(3600) * Scalar(params.energy_capacity));
  return make_lti<Scalar>(Matrix<Scalar>::Ones(1, 1), b,
                          Matrix<Scalar>::Ones(1, 1), Matrix<Scalar>::Zero(1, 1),
                          dt);
}

/// Nonlinear SOC update: charge scaled by eta_c, discharge by 1/eta_d.
inline double step_battery(const BatteryParams& params, double soc,
                           double power_w, double dt) {
  const double eta = power_w >= 0 ? params.charge_efficiency
                                  : 1.0 / params.discharge_efficiency;
  return soc + 100.0 * eta * power_w * dt / (3600.0 * params.energy_capacity);
}

template <typename Scalar>
struct PlantStep {
  Vector<Scalar> x_next;
  Vector<Scalar> y;
};

/// One transition of the linear plant. `disturbance` is an additive state
/// offset (already mapped into state space).
template <typename Scalar, typename DerivedX, typename DerivedU>
PlantStep<Scalar> step_plant(
    const LTIModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x,
    const Eigen::MatrixBase<DerivedU>& u,
    const std::optional<Vector<Scalar>>& disturbance = std::nullopt) {
  if (x.size() != model.n() || u.size() != model.m()) {
    throw DimensionError("step_plant: state/input size mismatch");
  }
  PlantStep<Scalar> out;
  out.x_next = model.A * x + model.B * u;
  if (disturbance) {
    if (disturbance->size() != model.n()) {
      throw DimensionError("step_plant: disturbance size != n");
    }
    out.x_next += *disturbance;
  }
  out.y = model.C * x + model.D * u;
  return out;
}

/// Contiguous-from-slot-0 PWM pattern with round(n_slots * u / u_max) ON
/// slots. `u` must already be saturated to [0, u_max].
PWMSchedule pwm_encode(double u, double u_max, int n_slots);

/// Period-average power delivered by a schedule.
double pwm_realized_power(const PWMSchedule& schedule, double u_max);

}  // namespace bemctl
