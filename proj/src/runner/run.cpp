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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "bemctl/estimation.hpp"
#include "bemctl/mpc.hpp"
#include "bemctl/runner.hpp"
#include "bemctl/smmpc.hpp"

namespace bemctl {

namespace {

// Measurement noise with a fully specified stream (mt19937_64 is defined
// bit for bit by the standard; the distributions are not, so they are
// written out here).
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : gen_(seed) {}

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

constexpr std::uint64_t kOfflineStream = 0x9e3779b97f4a7c15ULL;

// The true plant. The thermal zone is linear; the battery applies the
// sign-dependent efficiency.
struct TruePlant {
  const Scenario& sc;
  LTIModel<double> thermal;

  explicit TruePlant(const Scenario& s) : sc(s) {
    if (s.plant == PlantKind::thermal) thermal = build_thermal_model<double>(s.thermal, s.dt);
  }

  bool is_thermal() const { return sc.plant == PlantKind::thermal; }

  double input_lo() const { return is_thermal() ? 0.0 : sc.battery.power_min; }
  double input_hi() const {
    return is_thermal() ? sc.thermal.heater_capacity : sc.battery.power_max;
  }

  // Measured disturbance at step k (ambient temperature), if any.
  double ambient(std::size_t k) const { return sc.thermal.ambient_at(k); }

  // Ambient `back` steps before step 0, continuing the cyclic profile.
  double ambient_before(std::size_t back) const {
    const std::size_t period = sc.thermal.ambient_temp_profile.size();
    return sc.thermal.ambient_at((period - back % period) % period);
  }

  double next(double x, double u_w, std::size_t k) const {
    if (is_thermal()) {
      return thermal.A(0, 0) * x + thermal.B(0, 0) * u_w + thermal.E(0, 0) * ambient(k);
    }
    return step_battery(sc.battery, x, u_w, sc.dt);
  }

  // Power actually delivered for a command in W.
  double actuate(double u_w) const {
    const double u = std::clamp(u_w, input_lo(), input_hi());
    if (!is_thermal()) return u;
    const PWMSchedule pwm = pwm_encode(u, sc.thermal.heater_capacity, sc.pwm_slots);
    return pwm_realized_power(pwm, sc.thermal.heater_capacity);
  }
};

// Controller-side model in controller input units. The battery predictor
// ignores conversion losses; the estimator absorbs the mismatch.
LTIModel<double> predictor_model(const Scenario& sc) {
  LTIModel<double> m;
  if (sc.plant == PlantKind::thermal) {
    m = build_thermal_model<double>(sc.thermal, sc.dt);
  } else {
    BatteryParams ideal = sc.battery;
    ideal.charge_efficiency = 1.0;
    m = build_battery_model<double>(ideal, sc.dt);
  }
  m.B *= sc.input_unit_w;
  return m;
}

Box<double> controller_u_box(const Scenario& sc, const TruePlant& plant) {
  Box<double> b;
  b.lo = Vector<double>::Constant(1, plant.input_lo() / sc.input_unit_w);
  b.hi = Vector<double>::Constant(1, plant.input_hi() / sc.input_unit_w);
  return b;
}

Box<double> controller_y_box(const Scenario& sc) {
  if (!sc.comfort_band) return Box<double>::unbounded(1);
  Box<double> b;
  b.lo = Vector<double>::Constant(1, sc.comfort_band->lo + sc.constraint_backoff);
  b.hi = Vector<double>::Constant(1, sc.comfort_band->hi - sc.constraint_backoff);
  return b;
}

bool disturbed_output(const Scenario& sc, std::size_t k) {
  for (const auto& d : sc.disturbances) {
    if (k >= d.start_step && k <= d.end_step) return true;
  }
  return false;
}

double disturbance_offset(const Scenario& sc, std::size_t k) {
  double off = 0;
  for (const auto& d : sc.disturbances) {
    if (d.active(k)) off += d.state_offset_per_step;
  }
  return off;
}

Matrix<double> reference_window(const Scenario& sc, std::size_t k) {
  Matrix<double> r(1, sc.horizon);
  for (int j = 0; j < sc.horizon; ++j) {
    const std::size_t idx = std::min(k + static_cast<std::size_t>(j), sc.duration_steps - 1);
    r(0, j) = sc.reference.at(idx);
  }
  return r;
}

template <typename T>
SummaryStats summary(const std::vector<T>& v) {
  SummaryStats s;
  if (v.empty()) return s;
  double sum = 0;
  s.min = s.max = static_cast<double>(v.front());
  for (const T& x : v) {
    const double d = static_cast<double>(x);
    s.min = std::min(s.min, d);
    s.max = std::max(s.max, d);
    sum += d;
  }
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

// Result of one controller invocation, in controller units.
struct ControlOutput {
  double u = 0;
  double slack = 0;
  int iterations = 0;
  QPStatus status = QPStatus::optimal;
};

class Controller {
 public:
  virtual ~Controller() = default;
  // Returns the input for step k given the measurement y_meas.
  virtual ControlOutput step(std::size_t k, double y_meas) = 0;
  // Records the input actually applied at step k (controller units).
  virtual void applied(std::size_t k, double u_units) = 0;
};

class MpcLoop : public Controller {
 public:
  MpcLoop(const Scenario& sc, const TruePlant& plant)
      : sc_(sc), plant_(plant), model_(predictor_model(sc)) {
    Matrix<double> q(1, 1), qp(1, 1);
    q(0, 0) = sc.q_weight;
    qp(0, 0) = sc.qp_weight;
    auto ocp = build_ocp<double>(model_, sc.horizon, q, qp, Matrix<double>::Zero(1, sc.horizon),
                                 controller_u_box(sc, plant), controller_y_box(sc),
                                 Vector<double>::Zero(1), sc.slack_weight);
    ctrl_.emplace(std::move(ocp), sc.qp);
  }

  ControlOutput step(std::size_t k, double y_meas) override {
    Vector<double> y(1);
    y(0) = y_meas;
    if (!kf_) {
      Matrix<double> qproc(1, 1), rmeas(1, 1), p0(1, 1);
      qproc(0, 0) = sc_.mpc.q_proc;
      rmeas(0, 0) = sc_.noise_sigma * sc_.noise_sigma;
      p0(0, 0) = std::max(rmeas(0, 0), 1e-6);
      kf_ = make_kalman_filter<double>(model_, qproc, rmeas, y, p0);
    } else {
      Vector<double> u(1);
      u(0) = u_prev_;
      Vector<double> w;
      if (model_.q() > 0) w = Vector<double>::Constant(1, plant_.ambient(k - 1));
      kf_ = kf_update_joseph(kf_predict(*kf_, u, w), y);
    }

    Matrix<double> w_fore;
    if (model_.q() > 0) {
      w_fore.resize(1, sc_.horizon);
      for (int j = 0; j < sc_.horizon; ++j) {
        w_fore(0, j) = model_.E(0, 0) * plant_.ambient(k + static_cast<std::size_t>(j));
      }
    }
    const auto res = ctrl_->step(kf_->x_hat, reference_window(sc_, k), w_fore);
    return {res.u0(0), res.max_slack, res.sol.iterations, res.sol.status};
  }

  void applied(std::size_t, double u_units) override { u_prev_ = u_units; }

 private:
  const Scenario& sc_;
  const TruePlant& plant_;
  LTIModel<double> model_;
  std::optional<MpcController<double>> ctrl_;
  std::optional<KalmanFilter<double>> kf_;
  double u_prev_ = 0;
};

// Offline experiment on the true plant with uniformly random inputs.
struct OfflineRun {
  Matrix<double> u, y, w;
};

OfflineRun offline_experiment(const Scenario& sc, const TruePlant& plant) {
  NoiseSource rng(sc.seed ^ kOfflineStream);
  const auto T = static_cast<Eigen::Index>(sc.smmpc.offline_steps);
  OfflineRun d;
  d.u.resize(T, 1);
  d.y.resize(T, 1);
  if (plant.is_thermal()) d.w.resize(T, 1);
  const double mid = 0.5 * (plant.input_lo() + plant.input_hi());
  const double half = 0.5 * (plant.input_hi() - plant.input_lo()) * sc.smmpc.excitation_fraction;
  double x = sc.initial_state;
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto k = static_cast<std::size_t>(t);
    const double u_cmd = mid + half * (2 * rng.uniform01() - 1);
    const double u_app = plant.actuate(u_cmd);
    d.u(t, 0) = u_app / sc.input_unit_w;
    d.y(t, 0) = x + sc.noise_sigma * rng.normal();
    if (plant.is_thermal()) d.w(t, 0) = plant.ambient(k);
    x = plant.next(x, u_app, k);
  }
  return d;
}

class SmmpcLoop : public Controller {
 public:
  SmmpcLoop(const Scenario& sc, const TruePlant& plant, double hold_u_units,
            double hold_y)
      : sc_(sc), plant_(plant) {
    const OfflineRun data = offline_experiment(sc, plant);
    auto sm = build_signal_matrix<double>(data.u, data.y, sc.smmpc.T_ini, sc.horizon, data.w);
    SMMPCConfig<double> cfg;
    cfg.T_ini = sc.smmpc.T_ini;
    cfg.N = sc.horizon;
    cfg.Q = Matrix<double>::Constant(1, 1, sc.q_weight);
    cfg.Qp = Matrix<double>::Constant(1, 1, sc.qp_weight);
    cfg.lambda_g = sc.smmpc.lambda_g;
    cfg.noise_variance = sc.smmpc.noise_variance;
    cfg.lambda_y = sc.smmpc.noise_variance > 0 ? 1.0 / sc.smmpc.noise_variance
                                               : std::numeric_limits<double>::infinity();
    cfg.u_box = controller_u_box(sc, plant);
    cfg.y_box = controller_y_box(sc);
    cfg.slack_weight = sc.slack_weight;
    ctrl_.emplace(std::move(sm), std::move(cfg), sc.qp);
    for (int i = 0; i < sc.smmpc.T_ini; ++i) {
      u_hist_.push_back(hold_u_units);
      y_hist_.push_back(hold_y);
      w_hist_.push_back(plant.is_thermal()
                            ? plant.ambient_before(static_cast<std::size_t>(sc.smmpc.T_ini - i))
                            : 0.0);
    }
  }

  ControlOutput step(std::size_t k, double y_meas) override {
    const int T = sc_.smmpc.T_ini;
    Vector<double> u_ini(T), y_ini(T), w_ini, w_f;
    for (int i = 0; i < T; ++i) {
      u_ini(i) = u_hist_[static_cast<std::size_t>(i)];
      y_ini(i) = y_hist_[static_cast<std::size_t>(i)];
    }
    if (plant_.is_thermal()) {
      w_ini.resize(T);
      for (int i = 0; i < T; ++i) w_ini(i) = w_hist_[static_cast<std::size_t>(i)];
      w_f.resize(sc_.horizon);
      for (int j = 0; j < sc_.horizon; ++j) w_f(j) = plant_.ambient(k + static_cast<std::size_t>(j));
    }
    y_now_ = y_meas;
    const auto res = ctrl_->step(u_ini, y_ini, reference_window(sc_, k), w_ini, w_f);
    return {res.u0(0), res.diagnostics.max_slack, res.sol.iterations, res.sol.status};
  }

  void applied(std::size_t k, double u_units) override {
    u_hist_.pop_front();
    y_hist_.pop_front();
    w_hist_.pop_front();
    u_hist_.push_back(u_units);
    y_hist_.push_back(y_now_);
    w_hist_.push_back(plant_.ambient(k));
  }

 private:
  const Scenario& sc_;
  const TruePlant& plant_;
  std::optional<SmmpcController<double>> ctrl_;
  std::deque<double> u_hist_, y_hist_, w_hist_;
  double y_now_ = 0;
};

}  // namespace

std::vector<double> RunReport::outputs() const {
  std::vector<double> v;
  v.reserve(trajectory.outputs.size());
  for (const auto& y : trajectory.outputs) v.push_back(y(0));
  return v;
}

std::vector<double> RunReport::inputs() const {
  std::vector<double> v;
  v.reserve(trajectory.inputs.size());
  for (const auto& u : trajectory.inputs) v.push_back(u(0));
  return v;
}

RunReport run_scenario(const Scenario& scenario) {
  scenario.validate();
  RunReport rep;
  rep.scenario = scenario;
  const Scenario& sc = rep.scenario;
  const TruePlant plant(sc);
  NoiseSource noise(sc.seed);

  double x = sc.initial_state;
  std::unique_ptr<Controller> ctrl;
  try {
    if (sc.controller == ControllerKind::mpc) {
      ctrl = std::make_unique<MpcLoop>(sc, plant);
    } else {
      // The data-driven controller needs T_ini past samples; they are
      // synthesized as a steady hold at the initial state.
      double hold_u = 0;
      if (plant.is_thermal() && std::isfinite(sc.thermal.thermal_resistance)) {
        hold_u = (x - plant.ambient(0)) / sc.thermal.thermal_resistance;
      }
      hold_u = plant.actuate(hold_u);
      ctrl = std::make_unique<SmmpcLoop>(sc, plant, hold_u / sc.input_unit_w, x);
    }
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.failed_step = 0;
    rep.failure = e.what();
    rep.trajectory.states.push_back(Vector<double>::Constant(1, x));
    return rep;
  }

  rep.trajectory.states.push_back(Vector<double>::Constant(1, x));
  for (std::size_t k = 0; k < sc.duration_steps; ++k) {
    const double y_true = x;
    const double y_meas = y_true + sc.noise_sigma * noise.normal();

    ControlOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = ctrl->step(k, y_meas);
    } catch (const std::exception& e) {
      rep.failed = true;
      rep.failed_step = k;
      rep.failure = e.what();
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();

    const double u_cmd = out.u * sc.input_unit_w;
    const double u_app = plant.actuate(u_cmd);
    ctrl->applied(k, u_app / sc.input_unit_w);
    x = plant.next(x, u_app, k) + disturbance_offset(sc, k);

    rep.trajectory.times.push_back(k);
    rep.trajectory.inputs.push_back(Vector<double>::Constant(1, u_app));
    rep.trajectory.outputs.push_back(Vector<double>::Constant(1, y_true));
    rep.trajectory.states.push_back(Vector<double>::Constant(1, x));
    rep.reference.push_back(sc.reference.at(k));
    rep.measured.push_back(y_meas);
    rep.commanded.push_back(u_cmd);
    rep.disturbed.push_back(disturbed_output(sc, k));
    rep.slack.push_back(out.slack);
    rep.solver_iterations.push_back(out.iterations);
    rep.solver_status.push_back(out.status);
    rep.step_wall_time_s.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (out.status != QPStatus::optimal) ++rep.non_optimal_steps;
  }

  rep.metrics = compute_metrics(rep.outputs(), rep.reference, rep.inputs(), sc.dt,
                                sc.comfort_band, rep.disturbed, rep.slack);
  rep.iterations = summary(rep.solver_iterations);
  rep.wall_time_s = summary(rep.step_wall_time_s);
  return rep;
}

}  // namespace bemctl
