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
#include <fstream>

#include "bemctl/errors.hpp"
#include "bemctl/format.hpp"
#include "bemctl/latency.hpp"

namespace bemctl::latency {

double quantile_inclusive(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidParameter("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

LatencyStats summarize(std::span<const RTTSample> samples) {
  LatencyStats st;
  st.n = samples.size();
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.lost) {
      ++st.n_lost;
    } else {
      v.push_back(static_cast<double>(s.rtt_ns));
    }
  }
  if (v.empty()) throw InvalidParameter("summarize: every sample is lost");
  std::sort(v.begin(), v.end());
  st.min = v.front();
  st.max = v.back();
  st.q1 = quantile_inclusive(v, 0.25);
  st.median = quantile_inclusive(v, 0.5);
  st.q3 = quantile_inclusive(v, 0.75);
  double sum = 0;
  for (double x : v) sum += x;
  st.mean = sum / static_cast<double>(v.size());
  return st;
}

double fraction_within(std::span<const RTTSample> samples, std::uint64_t bound_ns) {
  if (samples.empty()) return 0;
  std::size_t ok = 0;
  for (const auto& s : samples) {
    if (!s.lost && s.rtt_ns <= bound_ns) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

void write_samples_csv(const std::string& path, std::span<const RTTSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "seq,rtt_ns,lost\n";
  for (const auto& s : samples) {
    out << s.seq << ',' << (s.lost ? 0 : s.rtt_ns) << ',' << (s.lost ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<RTTSample> read_samples_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"seq", "rtt_ns", "lost"}) {
    throw IoError("'" + path + "': expected header seq,rtt_ns,lost");
  }
  std::vector<RTTSample> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw IoError("'" + path + "': malformed row '" + line + "'");
    RTTSample s;
    try {
      s.seq = static_cast<std::uint32_t>(std::stoul(f[0]));
      s.rtt_ns = std::stoull(f[1]);
    } catch (const std::exception&) {
      throw IoError("'" + path + "': malformed row '" + line + "'");
    }
    s.lost = f[2] == "1";
    out.push_back(s);
  }
  return out;
}

}  // namespace bemctl::latency
