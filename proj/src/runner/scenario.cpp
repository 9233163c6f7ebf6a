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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bemctl/errors.hpp"
#include "bemctl/format.hpp"
#include "bemctl/runner.hpp"

namespace bemctl {

using nlohmann::json;

const char* to_string(PlantKind k) {
  return k == PlantKind::thermal ? "thermal" : "battery";
}

const char* to_string(ControllerKind k) {
  return k == ControllerKind::mpc ? "mpc" : "smmpc";
}

ControllerKind parse_controller_kind(const std::string& s) {
  if (s == "mpc") return ControllerKind::mpc;
  if (s == "smmpc") return ControllerKind::smmpc;
  throw InvalidParameter("unknown controller '" + s + "' (expected mpc or smmpc)");
}

double ReferenceSpec::at(std::size_t k) const {
  switch (kind) {
    case Kind::constant:
      return value;
    case Kind::sinusoid:
      return offset + amplitude * std::sin(2 * std::numbers::pi *
                                           (static_cast<double>(k) + phase_steps) /
                                           period_steps);
    case Kind::file:
      if (samples.empty()) throw InvalidParameter("reference file has no samples");
      return samples[std::min(k, samples.size() - 1)];
  }
  return 0;
}

void Scenario::validate() const {
  if (horizon < 1) throw InvalidParameter("scenario: horizon must be >= 1");
  if (duration_steps < static_cast<std::size_t>(horizon)) {
    throw InvalidParameter("scenario: duration_steps must be >= horizon");
  }
  if (!(dt > 0) || !std::isfinite(dt)) throw InvalidParameter("scenario: dt must be > 0");
  if (!std::isfinite(initial_state)) throw InvalidParameter("scenario: initial_state not finite");
  if (plant == PlantKind::thermal) {
    thermal.validate();
  } else {
    battery.validate();
  }
  if (comfort_band) {
    if (!(comfort_band->lo < comfort_band->hi)) {
      throw InvalidParameter("scenario: comfort band needs lo < hi");
    }
    if (!(comfort_band->hi - comfort_band->lo > 2 * constraint_backoff)) {
      throw InvalidParameter("scenario: constraint_backoff leaves an empty band");
    }
  }
  if (!(constraint_backoff >= 0)) throw InvalidParameter("scenario: constraint_backoff must be >= 0");
  for (const auto& d : disturbances) {
    if (d.start_step >= d.end_step || d.end_step > duration_steps) {
      throw InvalidParameter("scenario: disturbance window [" + std::to_string(d.start_step) +
                             ", " + std::to_string(d.end_step) + ") outside the run");
    }
    if (!std::isfinite(d.state_offset_per_step)) {
      throw InvalidParameter("scenario: disturbance offset not finite");
    }
  }
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) {
    throw InvalidParameter("scenario: noise sigma must be >= 0");
  }
  if (reference.kind == ReferenceSpec::Kind::sinusoid && !(reference.period_steps > 0)) {
    throw InvalidParameter("scenario: sinusoid period must be > 0");
  }
  if (reference.kind == ReferenceSpec::Kind::file && reference.samples.empty()) {
    throw InvalidParameter("scenario: reference file '" + reference.path + "' is empty");
  }
  if (!(q_weight >= 0) || !(qp_weight > 0) || !(slack_weight > 0)) {
    throw InvalidParameter("scenario: need q_weight >= 0, qp_weight > 0, slack_weight > 0");
  }
  if (!(input_unit_w > 0)) throw InvalidParameter("scenario: input_unit_w must be > 0");
  if (pwm_slots < 1) throw InvalidParameter("scenario: pwm_slots must be >= 1");
  if (!(mpc.q_proc >= 0)) throw InvalidParameter("scenario: q_proc must be >= 0");
  if (smmpc.T_ini < 1) throw InvalidParameter("scenario: smmpc T_ini must be >= 1");
  if (!(smmpc.lambda_g >= 0) || !(smmpc.noise_variance >= 0)) {
    throw InvalidParameter("scenario: smmpc lambda_g and noise_variance must be >= 0");
  }
  if (smmpc.offline_steps < static_cast<std::size_t>(smmpc.T_ini + horizon)) {
    throw InvalidParameter("scenario: smmpc offline_steps must be >= T_ini + horizon");
  }
  if (!(smmpc.excitation_fraction > 0 && smmpc.excitation_fraction <= 1)) {
    throw InvalidParameter("scenario: smmpc excitation_fraction must lie in (0, 1]");
  }
}

Scenario preset_case1_heating() {
  Scenario s;
  s.name = "case1_heating";
  s.plant = PlantKind::thermal;
  s.thermal.ambient_temp_profile.resize(96);
  // Daily ambient swing between about 1 and 9 degC, warmest mid-afternoon.
  for (std::size_t k = 0; k < 96; ++k) {
    s.thermal.ambient_temp_profile[k] =
        5.0 + 4.0 * std::sin(2 * std::numbers::pi * (static_cast<double>(k) - 36.0) / 96.0);
  }
  s.initial_state = 21.0;
  s.horizon = 24;
  s.duration_steps = 192;
  s.reference.kind = ReferenceSpec::Kind::constant;
  s.reference.value = 20.5;
  s.comfort_band = ComfortBand{20.0, 24.0};
  s.constraint_backoff = 0.5;
  s.disturbances = {{40, 44, -1.5}, {130, 133, -2.0}};
  s.noise_sigma = 0.05;
  s.seed = 1;
  s.q_weight = 0;
  s.qp_weight = 1;
  s.slack_weight = 1e4;
  s.input_unit_w = 1000;
  s.pwm_slots = 15;
  s.mpc.q_proc = 0.1;
  s.smmpc.T_ini = 4;
  s.smmpc.lambda_g = 100;
  s.smmpc.noise_variance = 0.0025;
  s.smmpc.offline_steps = 1000;
  return s;
}

Scenario preset_case2_battery() {
  Scenario s;
  s.name = "case2_battery";
  s.plant = PlantKind::battery;
  s.initial_state = 50.0;
  s.horizon = 24;
  s.duration_steps = 96;
  s.reference.kind = ReferenceSpec::Kind::sinusoid;
  s.reference.offset = 50.0;
  s.reference.amplitude = 20.0;
  s.reference.period_steps = 96;
  s.noise_sigma = 0.05;
  s.seed = 1;
  s.q_weight = 1;
  s.qp_weight = 1e-4;
  s.slack_weight = 1e4;
  s.input_unit_w = 1000;
  s.mpc.q_proc = 1e-2;
  s.smmpc.T_ini = 4;
  s.smmpc.lambda_g = 100;
  s.smmpc.noise_variance = 0.0025;
  s.smmpc.offline_steps = 1000;
  return s;
}

Scenario preset(const std::string& name) {
  if (name == "case1_heating" || name == "case1") return preset_case1_heating();
  if (name == "case2_battery" || name == "case2") return preset_case2_battery();
  throw InvalidParameter("unknown preset '" + name + "' (expected case1_heating or case2_battery)");
}

namespace {

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::vector<double> read_reference_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open reference file '" + path + "'");
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string& cell = cells.back();
    try {
      out.push_back(parse_double(cell));
    } catch (const IoError&) {
      if (lineno == 1) continue;  // header row
      throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad value '" + cell + "'");
    }
  }
  return out;
}

Scenario from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw InvalidParameter("scenario: top level must be an object");
  if (!j.contains("schema_version") || j.at("schema_version") != 1) {
    throw InvalidParameter("scenario: schema_version 1 required");
  }
  Scenario s;
  if (j.contains("base")) s = preset(j.at("base").get<std::string>());
  get_opt(j, "name", s.name);
  get_opt(j, "dt", s.dt);
  get_opt(j, "duration_steps", s.duration_steps);
  get_opt(j, "seed", s.seed);

  if (j.contains("plant")) {
    const json& p = j.at("plant");
    if (p.contains("kind")) {
      const auto kind = p.at("kind").get<std::string>();
      if (kind == "thermal") {
        s.plant = PlantKind::thermal;
      } else if (kind == "battery") {
        s.plant = PlantKind::battery;
      } else {
        throw InvalidParameter("scenario: unknown plant kind '" + kind + "'");
      }
    }
    get_opt(p, "initial_state", s.initial_state);
    get_opt(p, "thermal_resistance", s.thermal.thermal_resistance);
    get_opt(p, "thermal_capacitance", s.thermal.thermal_capacitance);
    get_opt(p, "heater_capacity", s.thermal.heater_capacity);
    get_opt(p, "ambient_temp_profile", s.thermal.ambient_temp_profile);
    get_opt(p, "energy_capacity", s.battery.energy_capacity);
    get_opt(p, "charge_efficiency", s.battery.charge_efficiency);
    get_opt(p, "discharge_efficiency", s.battery.discharge_efficiency);
    get_opt(p, "power_min", s.battery.power_min);
    get_opt(p, "power_max", s.battery.power_max);
    get_opt(p, "pwm_slots", s.pwm_slots);
    // JSON has no infinity; an adiabatic zone is written as null resistance.
    if (p.contains("thermal_resistance") && p.at("thermal_resistance").is_null()) {
      s.thermal.thermal_resistance = std::numeric_limits<double>::infinity();
    }
  }

  if (j.contains("controller")) {
    const json& c = j.at("controller");
    if (c.contains("kind")) s.controller = parse_controller_kind(c.at("kind").get<std::string>());
    get_opt(c, "horizon", s.horizon);
    get_opt(c, "q_weight", s.q_weight);
    get_opt(c, "qp_weight", s.qp_weight);
    get_opt(c, "slack_weight", s.slack_weight);
    get_opt(c, "input_unit_w", s.input_unit_w);
    get_opt(c, "constraint_backoff", s.constraint_backoff);
    get_opt(c, "q_proc", s.mpc.q_proc);
    if (c.contains("smmpc")) {
      const json& d = c.at("smmpc");
      get_opt(d, "T_ini", s.smmpc.T_ini);
      get_opt(d, "lambda_g", s.smmpc.lambda_g);
      get_opt(d, "noise_variance", s.smmpc.noise_variance);
      get_opt(d, "offline_steps", s.smmpc.offline_steps);
      get_opt(d, "excitation_fraction", s.smmpc.excitation_fraction);
    }
    if (c.contains("qp")) {
      const json& q = c.at("qp");
      get_opt(q, "max_iter", s.qp.max_iter);
      get_opt(q, "eps_abs", s.qp.eps_abs);
      get_opt(q, "eps_rel", s.qp.eps_rel);
      get_opt(q, "rho", s.qp.rho);
      get_opt(q, "polish", s.qp.polish);
    }
  }

  if (j.contains("reference")) {
    const json& r = j.at("reference");
    const auto kind = r.value("kind", std::string("constant"));
    ReferenceSpec ref;
    if (kind == "constant") {
      ref.kind = ReferenceSpec::Kind::constant;
      get_opt(r, "value", ref.value);
    } else if (kind == "sinusoid") {
      ref.kind = ReferenceSpec::Kind::sinusoid;
      get_opt(r, "offset", ref.offset);
      get_opt(r, "amplitude", ref.amplitude);
      get_opt(r, "period_steps", ref.period_steps);
      get_opt(r, "phase_steps", ref.phase_steps);
    } else if (kind == "file") {
      ref.kind = ReferenceSpec::Kind::file;
      ref.path = r.at("path").get<std::string>();
      if (r.contains("samples")) {
        ref.samples = r.at("samples").get<std::vector<double>>();
      } else {
        std::filesystem::path fp(ref.path);
        if (fp.is_relative()) fp = base_dir / fp;
        ref.samples = read_reference_file(fp.string());
      }
    } else {
      throw InvalidParameter("scenario: unknown reference kind '" + kind + "'");
    }
    s.reference = std::move(ref);
  }

  if (j.contains("comfort_band")) {
    const json& b = j.at("comfort_band");
    if (b.is_null()) {
      s.comfort_band.reset();
    } else {
      if (!b.is_array() || b.size() != 2) {
        throw InvalidParameter("scenario: comfort_band must be [lo, hi]");
      }
      s.comfort_band = ComfortBand{b.at(0).get<double>(), b.at(1).get<double>()};
    }
  }

  if (j.contains("disturbances")) {
    s.disturbances.clear();
    for (const json& d : j.at("disturbances")) {
      DisturbanceEvent ev;
      ev.start_step = d.at("start_step").get<std::size_t>();
      ev.end_step = d.at("end_step").get<std::size_t>();
      ev.state_offset_per_step = d.at("state_offset_per_step").get<double>();
      s.disturbances.push_back(ev);
    }
  }

  if (j.contains("noise")) get_opt(j.at("noise"), "sigma", s.noise_sigma);
  s.validate();
  return s;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidParameter(std::string("scenario: malformed JSON: ") + e.what());
  }
  try {
    return from_json(j, std::filesystem::current_path());
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw InvalidParameter("'" + path + "': malformed JSON: " + e.what());
  }
  try {
    return from_json(j, std::filesystem::path(path).parent_path());
  } catch (const json::exception& e) {
    throw InvalidParameter("'" + path + "': " + e.what());
  }
}

std::string scenario_to_json_text(const Scenario& s) {
  json j;
  j["schema_version"] = 1;
  j["name"] = s.name;
  j["dt"] = s.dt;
  j["duration_steps"] = s.duration_steps;
  j["seed"] = s.seed;

  json p;
  p["kind"] = to_string(s.plant);
  p["initial_state"] = s.initial_state;
  if (s.plant == PlantKind::thermal) {
    if (std::isfinite(s.thermal.thermal_resistance)) {
      p["thermal_resistance"] = s.thermal.thermal_resistance;
    } else {
      p["thermal_resistance"] = nullptr;
    }
    p["thermal_capacitance"] = s.thermal.thermal_capacitance;
    p["heater_capacity"] = s.thermal.heater_capacity;
    p["ambient_temp_profile"] = s.thermal.ambient_temp_profile;
    p["pwm_slots"] = s.pwm_slots;
  } else {
    p["energy_capacity"] = s.battery.energy_capacity;
    p["charge_efficiency"] = s.battery.charge_efficiency;
    p["discharge_efficiency"] = s.battery.discharge_efficiency;
    p["power_min"] = s.battery.power_min;
    p["power_max"] = s.battery.power_max;
  }
  j["plant"] = p;

  json c;
  c["kind"] = to_string(s.controller);
  c["horizon"] = s.horizon;
  c["q_weight"] = s.q_weight;
  c["qp_weight"] = s.qp_weight;
  c["slack_weight"] = s.slack_weight;
  c["input_unit_w"] = s.input_unit_w;
  c["constraint_backoff"] = s.constraint_backoff;
  c["q_proc"] = s.mpc.q_proc;
  c["smmpc"] = {{"T_ini", s.smmpc.T_ini},
                {"lambda_g", s.smmpc.lambda_g},
                {"noise_variance", s.smmpc.noise_variance},
                {"offline_steps", s.smmpc.offline_steps},
                {"excitation_fraction", s.smmpc.excitation_fraction}};
  c["qp"] = {{"max_iter", s.qp.max_iter},
             {"eps_abs", s.qp.eps_abs},
             {"eps_rel", s.qp.eps_rel},
             {"rho", s.qp.rho},
             {"polish", s.qp.polish}};
  j["controller"] = c;

  json r;
  switch (s.reference.kind) {
    case ReferenceSpec::Kind::constant:
      r = {{"kind", "constant"}, {"value", s.reference.value}};
      break;
    case ReferenceSpec::Kind::sinusoid:
      r = {{"kind", "sinusoid"},
           {"offset", s.reference.offset},
           {"amplitude", s.reference.amplitude},
           {"period_steps", s.reference.period_steps},
           {"phase_steps", s.reference.phase_steps}};
      break;
    case ReferenceSpec::Kind::file:
      r = {{"kind", "file"}, {"path", s.reference.path}, {"samples", s.reference.samples}};
      break;
  }
  j["reference"] = r;

  if (s.comfort_band) {
    j["comfort_band"] = {s.comfort_band->lo, s.comfort_band->hi};
  } else {
    j["comfort_band"] = nullptr;
  }
  json d = json::array();
  for (const auto& ev : s.disturbances) {
    d.push_back({{"start_step", ev.start_step},
                 {"end_step", ev.end_step},
                 {"state_offset_per_step", ev.state_offset_per_step}});
  }
  j["disturbances"] = d;
  j["noise"] = {{"sigma", s.noise_sigma}};
  return j.dump(2) + "\n";
}

}  // namespace bemctl
