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
#include <numbers>

#include <nlohmann/json.hpp>

#include "bemctl/errors.hpp"
#include "bemctl/latency.hpp"

namespace bemctl::latency {

void ChannelModel::validate() const {
  auto pos = [](double v) { return v > 0 && std::isfinite(v); };
  switch (kind) {
    case ChannelKind::fixed:
      if (!pos(one_way_ns)) throw InvalidParameter("fixed channel: one_way_ns must be > 0");
      break;
    case ChannelKind::uniform:
      if (!pos(lo_ns) || !pos(hi_ns) || lo_ns > hi_ns) {
        throw InvalidParameter("uniform channel: need 0 < lo_ns <= hi_ns");
      }
      break;
    case ChannelKind::lognormal:
      if (!std::isfinite(mu_ln_ns) || !pos(sigma)) {
        throw InvalidParameter("lognormal channel: need finite mu and sigma > 0");
      }
      break;
  }
  if (!(drop_prob >= 0 && drop_prob <= 1)) {
    throw InvalidParameter("channel drop_prob must lie in [0, 1]");
  }
}

ChannelModel channel_profile(const std::string& name, std::uint64_t seed) {
  ChannelModel ch;
  ch.seed = seed;
  if (name == "ethernet-fixed") {
    ch.kind = ChannelKind::fixed;
    ch.one_way_ns = 0.5e6;
  } else if (name == "lan-uniform") {
    ch.kind = ChannelKind::uniform;
    ch.lo_ns = 0.5e6;
    ch.hi_ns = 2e6;
  } else if (name == "wifi-lognormal") {
    ch.kind = ChannelKind::lognormal;
    ch.mu_ln_ns = std::log(120e6);
    ch.sigma = 0.6;
    ch.drop_prob = 0.005;
  } else {
    throw InvalidParameter("unknown channel profile '" + name + "'");
  }
  return ch;
}

std::vector<std::string> channel_profile_names() {
  return {"ethernet-fixed", "lan-uniform", "wifi-lognormal"};
}

ChannelModel load_channel_profile(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open profile '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  ChannelModel ch;
  ch.seed = seed;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "fixed") {
      ch.kind = ChannelKind::fixed;
      ch.one_way_ns = j.at("one_way_ms").get<double>() * 1e6;
    } else if (kind == "uniform") {
      ch.kind = ChannelKind::uniform;
      ch.lo_ns = j.at("lo_ms").get<double>() * 1e6;
      ch.hi_ns = j.at("hi_ms").get<double>() * 1e6;
    } else if (kind == "lognormal") {
      ch.kind = ChannelKind::lognormal;
      ch.mu_ln_ns = j.contains("mu_ln_ns")
                        ? j.at("mu_ln_ns").get<double>()
                        : std::log(j.at("median_one_way_ms").get<double>() * 1e6);
      ch.sigma = j.at("sigma").get<double>();
    } else {
      throw InvalidParameter("'" + path + "': unknown kind '" + kind + "'");
    }
    ch.drop_prob = j.value("drop_prob", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  ch.validate();
  return ch;
}

ChannelRng::ChannelRng(std::uint64_t seed) : gen_(seed) {}

double ChannelRng::uniform01() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double ChannelRng::normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double ChannelRng::one_way_delay(const ChannelModel& ch) {
  switch (ch.kind) {
    case ChannelKind::fixed:
      uniform01();
      uniform01();
      return ch.one_way_ns;
    case ChannelKind::uniform: {
      const double u = uniform01();
      uniform01();
      return ch.lo_ns + u * (ch.hi_ns - ch.lo_ns);
    }
    case ChannelKind::lognormal:
      return std::exp(ch.mu_ln_ns + ch.sigma * normal());
  }
  return 0;
}

std::vector<RTTSample> simulate_rtt(const ChannelModel& channel, std::size_t n_probes) {
  channel.validate();
  ChannelRng rng(channel.seed);
  std::vector<RTTSample> out;
  out.reserve(n_probes);
  for (std::size_t i = 0; i < n_probes; ++i) {
    const bool drop_out = rng.uniform01() < channel.drop_prob;
    const double d_out = rng.one_way_delay(channel);
    const bool drop_back = rng.uniform01() < channel.drop_prob;
    const double d_back = rng.one_way_delay(channel);
    RTTSample s;
    s.seq = static_cast<std::uint32_t>(i);
    s.lost = drop_out || drop_back;
    if (!s.lost) {
      s.rtt_ns = static_cast<std::uint64_t>(std::llround(d_out)) +
                 static_cast<std::uint64_t>(std::llround(d_back));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace bemctl::latency
