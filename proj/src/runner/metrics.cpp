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
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bemctl/errors.hpp"
#include "bemctl/format.hpp"
#include "bemctl/runner.hpp"

namespace bemctl {

namespace {
constexpr double kSlackActive = 1e-6;
}

Metrics compute_metrics(const std::vector<double>& y, const std::vector<double>& r,
                        const std::vector<double>& u, double dt,
                        const std::optional<ComfortBand>& band,
                        const std::vector<bool>& disturbed,
                        const std::vector<double>& slack) {
  const std::size_t n = y.size();
  if (r.size() != n || u.size() != n || disturbed.size() != n ||
      (!slack.empty() && slack.size() != n)) {
    throw DimensionError("compute_metrics: y, r, u, disturbed (and slack) lengths differ");
  }
  Metrics m;
  m.steps = n;
  double sum = 0, sum_sq = 0, energy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = y[k] - r[k];
    sum += e;
    sum_sq += e * e;
    energy += std::max(u[k], 0.0) * dt / 3600.0;
    if (band && (y[k] < band->lo || y[k] > band->hi)) {
      if (disturbed[k]) {
        ++m.violation_steps_during_disturbance;
      } else {
        ++m.comfort_violation_steps;
      }
    }
    if (!slack.empty() && slack[k] > kSlackActive) {
      ++m.slack_active_steps;
      if (disturbed[k]) ++m.slack_active_steps_during_disturbance;
    }
  }
  if (n > 0) {
    m.mean_error = sum / static_cast<double>(n);
    m.rmse = std::sqrt(sum_sq / static_cast<double>(n));
  }
  m.energy_used_Wh = energy;
  return m;
}

double TrajectoryTable::dt() const {
  return t_s.size() >= 2 ? t_s[1] - t_s[0] : 0.0;
}

TrajectoryTable read_trajectory_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "k,t_s,u,y,r,disturbed,slack") {
    throw IoError("'" + path + "': expected header k,t_s,u,y,r,disturbed,slack");
  }
  TrajectoryTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 7) {
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": expected 7 fields");
    }
    try {
      t.k.push_back(static_cast<std::size_t>(std::stoull(c[0])));
    } catch (const std::exception&) {
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad step index");
    }
    t.t_s.push_back(parse_double(c[1]));
    t.u.push_back(parse_double(c[2]));
    t.y.push_back(parse_double(c[3]));
    t.r.push_back(parse_double(c[4]));
    if (c[5] != "0" && c[5] != "1") {
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": disturbed must be 0/1");
    }
    t.disturbed.push_back(c[5] == "1");
    t.slack.push_back(parse_double(c[6]));
  }
  return t;
}

Metrics metrics_from_table(const TrajectoryTable& t, const std::optional<ComfortBand>& band) {
  return compute_metrics(t.y, t.r, t.u, t.dt(), band, t.disturbed, t.slack);
}

namespace {

void put_metrics(nlohmann::ordered_json& j, const Metrics& m) {
  j["steps"] = m.steps;
  j["mean_error"] = m.mean_error;
  j["rmse"] = m.rmse;
  j["comfort_violation_steps"] = m.comfort_violation_steps;
  j["violation_steps_during_disturbance"] = m.violation_steps_during_disturbance;
  j["energy_used_Wh"] = m.energy_used_Wh;
  j["slack_active_steps"] = m.slack_active_steps;
  j["slack_active_steps_during_disturbance"] = m.slack_active_steps_during_disturbance;
}

}  // namespace

std::string metrics_only_json_text(const Metrics& m) {
  nlohmann::ordered_json j;
  put_metrics(j, m);
  return j.dump(2) + "\n";
}

std::string metrics_to_json_text(const RunReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["scenario"] = report.scenario.name;
  j["plant"] = to_string(report.scenario.plant);
  j["controller"] = to_string(report.scenario.controller);
  j["seed"] = report.scenario.seed;
  j["status"] = report.failed ? "failed" : "ok";
  if (report.failed) {
    j["failed_step"] = report.failed_step;
    j["failure"] = report.failure;
  } else {
    j["failed_step"] = nullptr;
    j["failure"] = nullptr;
  }
  put_metrics(j, report.metrics);
  j["non_optimal_steps"] = report.non_optimal_steps;
  j["solver_iterations"] = {{"min", report.iterations.min},
                            {"max", report.iterations.max},
                            {"mean", report.iterations.mean}};
  return j.dump(2) + "\n";
}

}  // namespace bemctl
