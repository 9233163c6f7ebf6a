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

// runner: closed-loop experiments from scenario files or built-in presets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "bemctl/errors.hpp"
#include "bemctl/format.hpp"
#include "bemctl/runner.hpp"

namespace {

int finish(const bemctl::RunReport& rep, const std::string& out_dir) {
  bemctl::emit_report(rep, out_dir);
  const auto& m = rep.metrics;
  std::printf("%s (%s) -> %s\n", rep.scenario.name.c_str(),
              bemctl::to_string(rep.scenario.controller), out_dir.c_str());
  std::printf("steps %zu  mean_error %.4f  rmse %.4f  violations %zu (+%zu in events)  "
              "energy %.1f Wh  max step %.4f s\n",
              m.steps, m.mean_error, m.rmse, m.comfort_violation_steps,
              m.violation_steps_during_disturbance, m.energy_used_Wh, rep.wall_time_s.max);
  if (rep.failed) {
    std::fprintf(stderr, "run failed at step %zu: %s\n", rep.failed_step, rep.failure.c_str());
    return 3;
  }
  return 0;
}

std::optional<bemctl::ComfortBand> parse_band(const std::string& s) {
  const auto parts = bemctl::split_csv_line(s);
  if (parts.size() != 2) throw bemctl::InvalidParameter("--band expects lo,hi");
  return bemctl::ComfortBand{bemctl::parse_double(parts[0]), bemctl::parse_double(parts[1])};
}

// Band from a scenario.json next to the trajectory, if present.
std::optional<bemctl::ComfortBand> sibling_band(const std::string& traj) {
  const auto path = std::filesystem::path(traj).parent_path() / "scenario.json";
  std::ifstream in(path);
  if (!in) return std::nullopt;
  const auto j = nlohmann::json::parse(in);
  if (!j.contains("comfort_band") || j.at("comfort_band").is_null()) return std::nullopt;
  const auto& b = j.at("comfort_band");
  return bemctl::ComfortBand{b.at(0).get<double>(), b.at(1).get<double>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop MPC / SMM-PC experiments on building plants"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario file");
  std::string scenario_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> run_ctrl;
  run->add_option("--scenario", scenario_path, "scenario JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--controller", run_ctrl, "override the controller (mpc|smmpc)");

  auto* demo = app.add_subcommand("demo", "Run a built-in preset");
  std::string demo_case;
  std::string demo_ctrl = "mpc";
  std::optional<std::string> demo_out;
  std::optional<std::uint64_t> demo_seed;
  demo->add_option("case", demo_case, "case1 | case2 (or case1_heating | case2_battery)")
      ->required();
  demo->add_option("--controller", demo_ctrl, "mpc | smmpc");
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--seed", demo_seed, "override the preset seed");

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a trajectory.csv");
  std::string traj_path;
  std::optional<std::string> band_arg;
  metrics->add_option("--traj", traj_path, "trajectory.csv")->required();
  metrics->add_option("--band", band_arg, "comfort band lo,hi (default: sibling scenario.json)");

  auto* dump = app.add_subcommand("preset", "Print a preset as a scenario file");
  std::string dump_case;
  dump->add_option("case", dump_case, "case1 | case2")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto sc = bemctl::load_scenario(scenario_path);
      if (seed) sc.seed = *seed;
      if (run_ctrl) sc.controller = bemctl::parse_controller_kind(*run_ctrl);
      return finish(bemctl::run_scenario(sc), out_dir);
    }
    if (*demo) {
      auto sc = bemctl::preset(demo_case);
      sc.controller = bemctl::parse_controller_kind(demo_ctrl);
      if (demo_seed) sc.seed = *demo_seed;
      const std::string dir = demo_out ? *demo_out : "out/" + sc.name + "_" + demo_ctrl;
      return finish(bemctl::run_scenario(sc), dir);
    }
    if (*metrics) {
      const auto table = bemctl::read_trajectory_csv(traj_path);
      const auto band = band_arg ? parse_band(*band_arg) : sibling_band(traj_path);
      std::cout << bemctl::metrics_only_json_text(bemctl::metrics_from_table(table, band));
      return 0;
    }
    if (*dump) {
      std::cout << bemctl::scenario_to_json_text(bemctl::preset(dump_case));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
