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

// latency: echo server, stop-and-wait prober and channel simulator.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "bemctl/errors.hpp"
#include "bemctl/latency.hpp"

namespace lat = bemctl::latency;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

void print_summary(const std::vector<lat::RTTSample>& samples) {
  std::printf("probes     %zu\n", samples.size());
  try {
    const auto s = lat::summarize(samples);
    std::printf("lost       %zu\n", s.n_lost);
    std::printf("rtt_ms     min %.3f  q1 %.3f  median %.3f  q3 %.3f  max %.3f  mean %.3f\n",
                s.min / 1e6, s.q1 / 1e6, s.median / 1e6, s.q3 / 1e6, s.max / 1e6, s.mean / 1e6);
    std::printf("within_1s  %.4f\n", lat::fraction_within(samples, 1'000'000'000ULL));
  } catch (const std::exception& e) {
    std::printf("summary    unavailable (%s)\n", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Round-trip delay measurement and channel simulation"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "Run a TCP echo server");
  std::string bind = "0.0.0.0:7070";
  serve->add_option("--bind", bind, "host:port to listen on (port 0 picks one)");

  auto* probe = app.add_subcommand("probe", "Measure RTTs against an echo server");
  lat::ProberOptions popt;
  std::string probe_out = "samples.csv";
  probe->add_option("--target", popt.target, "host:port of the echo server")->required();
  probe->add_option("--count", popt.n_probes, "number of probes");
  probe->add_option("--interval-ms", popt.interval_ms, "spacing between probe sends");
  probe->add_option("--timeout-ms", popt.timeout_ms, "per-probe ack timeout");
  probe->add_option("--payload-bytes", popt.payload_len, "payload length")
      ->check(CLI::Range(0, 65535));
  probe->add_option("--out", probe_out, "samples CSV");

  auto* sim = app.add_subcommand("simulate", "Draw RTTs from a seeded channel model");
  std::string profile = "wifi-lognormal";
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  std::string sim_out = "samples.csv";
  sim->add_option("--profile", profile, "built-in profile name or JSON file");
  sim->add_option("--count", count, "number of probes");
  sim->add_option("--seed", seed, "generator seed");
  sim->add_option("--out", sim_out, "samples CSV");

  auto* summ = app.add_subcommand("summarize", "Print statistics of a samples CSV");
  std::string summ_in;
  summ->add_option("--in", summ_in, "samples CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      lat::EchoServer server(bind);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on port %u\n", static_cast<unsigned>(server.port()));
      std::fflush(stdout);
      while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      std::printf("acked %llu dropped %llu\n",
                  static_cast<unsigned long long>(server.acked()),
                  static_cast<unsigned long long>(server.dropped()));
      return 0;
    }
    if (*probe) {
      const auto run = lat::run_prober(popt);
      lat::write_samples_csv(probe_out, run.samples);
      if (run.connect_error) {
        std::fprintf(stderr, "connect failed: %s\n", run.error.c_str());
        return 2;
      }
      print_summary(run.samples);
      return 0;
    }
    if (*sim) {
      const auto ch = std::filesystem::exists(profile) ? lat::load_channel_profile(profile, seed)
                                                       : lat::channel_profile(profile, seed);
      const auto samples = lat::simulate_rtt(ch, count);
      lat::write_samples_csv(sim_out, samples);
      print_summary(samples);
      return 0;
    }
    if (*summ) {
      print_summary(lat::read_samples_csv(summ_in));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
