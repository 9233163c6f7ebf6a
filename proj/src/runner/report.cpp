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

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bemctl/errors.hpp"
#include "bemctl/format.hpp"
#include "bemctl/runner.hpp"

namespace bemctl {

namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string band_field(const std::optional<ComfortBand>& b, bool lo) {
  if (!b) return "";
  return format_double(lo ? b->lo : b->hi);
}

}  // namespace

void emit_report(const RunReport& report, const std::string& out_dir) {
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());

  const Scenario& sc = report.scenario;
  const auto y = report.outputs();
  const auto u = report.inputs();
  const std::size_t n = y.size();

  std::string traj = "k,t_s,u,y,r,disturbed,slack\n";
  std::string plot_y = "k,t_h,y,y_meas,r,band_lo,band_hi,disturbed\n";
  std::string plot_u = "k,t_h,u_cmd,u,slack,solver_iterations,solver_status\n";
  for (std::size_t k = 0; k < n; ++k) {
    const double t_s = static_cast<double>(k) * sc.dt;
    const std::string ks = std::to_string(k);
    const std::string th = format_double(t_s / 3600.0);
    const std::string dist = report.disturbed[k] ? "1" : "0";
    traj += ks + ',' + format_double(t_s) + ',' + format_double(u[k]) + ',' +
            format_double(y[k]) + ',' + format_double(report.reference[k]) + ',' + dist + ',' +
            format_double(report.slack[k]) + '\n';
    plot_y += ks + ',' + th + ',' + format_double(y[k]) + ',' +
              format_double(report.measured[k]) + ',' + format_double(report.reference[k]) +
              ',' + band_field(sc.comfort_band, true) + ',' +
              band_field(sc.comfort_band, false) + ',' + dist + '\n';
    plot_u += ks + ',' + th + ',' + format_double(report.commanded[k]) + ',' +
              format_double(u[k]) + ',' + format_double(report.slack[k]) + ',' +
              std::to_string(report.solver_iterations[k]) + ',' +
              to_string(report.solver_status[k]) + '\n';
  }
  write_file(dir / "trajectory.csv", traj);
  write_file(dir / "plotdata_output.csv", plot_y);
  write_file(dir / "plotdata_input.csv", plot_u);
  write_file(dir / "metrics.json", metrics_to_json_text(report));
  write_file(dir / "scenario.json", scenario_to_json_text(sc));

  // Wall-clock figures vary run to run; they live apart from the
  // byte-stable files.
  nlohmann::ordered_json timing;
  timing["steps"] = report.step_wall_time_s.size();
  timing["step_wall_time_s"] = {{"min", report.wall_time_s.min},
                                {"max", report.wall_time_s.max},
                                {"mean", report.wall_time_s.mean}};
  write_file(dir / "timing.json", timing.dump(2) + "\n");
}

}  // namespace bemctl
