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
/// Closed-loop experiments: scenario description, the measure / estimate /
/// control / actuate loop, metrics and report files.
///
/// Step k of a run records the output y_k (true plant output before the
/// input is applied), the reference r_k and the applied input u_k. A
/// disturbance event with window [start_step, end_step) adds its state
/// offset on the transitions k -> k+1 for k in that window; outputs
/// start_step..end_step (inclusive) are flagged as disturbed.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bemctl/plant.hpp"
#include "bemctl/qp.hpp"

namespace bemctl {

enum class PlantKind { thermal, battery };
enum class ControllerKind { mpc, smmpc };

const char* to_string(PlantKind k);
const char* to_string(ControllerKind k);
ControllerKind parse_controller_kind(const std::string& s);

struct ReferenceSpec {
  enum class Kind { constant, sinusoid, file };
  Kind kind = Kind::constant;
  double value = 0;        // constant
  double offset = 0;       // sinusoid: offset + amplitude sin(2 pi (k + phase) / period)
  double amplitude = 0;
  double period_steps = 96;
  double phase_steps = 0;
  std::string path;              // file: one value per line, or `k,r` rows
  std::vector<double> samples;   // file contents, held after the last one

  double at(std::size_t k) const;
};

struct DisturbanceEvent {
  std::size_t start_step = 0;
  std::size_t end_step = 0;  // exclusive
  double state_offset_per_step = 0;

  bool active(std::size_t k) const { return k >= start_step && k < end_step; }
};

struct ComfortBand {
  double lo = 0;
  double hi = 0;
};

struct MpcTuning {
  double q_proc = 1e-6;          // Kalman process noise (state units^2)
};

struct SmmpcTuning {
  int T_ini = 4;
  double lambda_g = 1e-2;
  double noise_variance = 0.0025;  // lambda_y = 1 / noise_variance
  std::size_t offline_steps = 300;
  double excitation_fraction = 0.5;  // offline input amplitude vs. input box
};

struct Scenario {
  std::string name = "scenario";
  PlantKind plant = PlantKind::battery;
  ThermalZoneParams thermal;
  BatteryParams battery;
  double initial_state = 50;  // degC or %SOC
  ControllerKind controller = ControllerKind::mpc;
  int horizon = 24;
  double dt = 900;
  std::size_t duration_steps = 96;
  ReferenceSpec reference;
  std::optional<ComfortBand> comfort_band;
  double constraint_backoff = 0;  // band tightening seen by the controller
  std::vector<DisturbanceEvent> disturbances;
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;

  // Weights in controller units: outputs as-is, inputs in `input_unit_w` W.
  double q_weight = 1;
  double qp_weight = 1e-4;
  double slack_weight = 1e4;
  double input_unit_w = 1000;
  int pwm_slots = 15;

  MpcTuning mpc;
  SmmpcTuning smmpc;
  QPSettings qp;

  void validate() const;
};

Scenario preset_case1_heating();
Scenario preset_case2_battery();
/// "case1_heating"/"case1" or "case2_battery"/"case2".
Scenario preset(const std::string& name);

/// Scenario files are JSON documents with `"schema_version": 1`. Fields
/// absent from the file keep the defaults of the named `base` preset (or of
/// Scenario{} when no base is given).
Scenario load_scenario(const std::string& path);
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& s);

struct SummaryStats {
  double min = 0, max = 0, mean = 0;
};

struct Metrics {
  std::size_t steps = 0;
  double mean_error = 0;
  double rmse = 0;
  std::size_t comfort_violation_steps = 0;             // outside disturbance windows
  std::size_t violation_steps_during_disturbance = 0;
  double energy_used_Wh = 0;
  std::size_t slack_active_steps = 0;
  std::size_t slack_active_steps_during_disturbance = 0;
};

/// mean(y - r), rms(y - r), band violations split by the disturbed flag,
/// energy = sum max(u, 0) dt / 3600, and slack activity (> 1e-6).
Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& r,
                        const std::vector<double>& u, double dt,
                        const std::optional<ComfortBand>& band,
                        const std::vector<bool>& disturbed,
                        const std::vector<double>& slack = {});

struct RunReport {
  Scenario scenario;
  Trajectory<double> trajectory;  // inputs: applied W; outputs: true y
  std::vector<double> reference;
  std::vector<double> measured;
  std::vector<double> commanded;  // controller command in W, before PWM
  std::vector<bool> disturbed;
  std::vector<double> slack;
  std::vector<int> solver_iterations;
  std::vector<QPStatus> solver_status;
  std::vector<double> step_wall_time_s;

  Metrics metrics;
  SummaryStats iterations;
  SummaryStats wall_time_s;
  std::size_t non_optimal_steps = 0;

  bool failed = false;
  std::size_t failed_step = 0;
  std::string failure;

  std::vector<double> outputs() const;
  std::vector<double> inputs() const;
};

RunReport run_scenario(const Scenario& scenario);

/// Writes trajectory.csv, metrics.json, scenario.json, plotdata_output.csv
/// and plotdata_input.csv (all byte-stable for a fixed seed) plus
/// timing.json with wall-clock statistics.
void emit_report(const RunReport& report, const std::string& out_dir);

std::string metrics_to_json_text(const RunReport& report);

/// Columns of trajectory.csv: k,t_s,u,y,r,disturbed,slack.
struct TrajectoryTable {
  std::vector<std::size_t> k;
  std::vector<double> t_s, u, y, r, slack;
  std::vector<bool> disturbed;

  double dt() const;
};

TrajectoryTable read_trajectory_csv(const std::string& path);
/// Recomputes the trajectory-derived metrics from a trajectory file.
Metrics metrics_from_table(const TrajectoryTable& t, const std::optional<ComfortBand>& band);
std::string metrics_only_json_text(const Metrics& m);

}  // namespace bemctl
