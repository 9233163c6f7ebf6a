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
/// Round-trip delay measurement. A prober sends framed probes over a
/// stream socket to an echo server and times the acknowledgement on a
/// monotonic clock; a seeded channel model produces synthetic RTTs for the
/// same statistics pipeline.
///
/// Wire format (big-endian, 18-byte header):
///
///   offset  size  field
///   0       4     magic "RTD1"
///   4       4     seq          (u32)
///   8       8     t_send       (u64, monotonic ns at the sender)
///   16      2     payload_len  (u16)
///   18      n     payload
///
/// The ack is the probe frame echoed byte for byte.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace bemctl::latency {

inline constexpr std::uint8_t kMagic[4] = {'R', 'T', 'D', '1'};
inline constexpr std::size_t kHeaderSize = 18;

struct ProbeMessage {
  std::uint32_t seq = 0;
  std::uint64_t t_send = 0;
  std::vector<std::uint8_t> payload;

  std::size_t wire_size() const { return kHeaderSize + payload.size(); }
  bool operator==(const ProbeMessage&) const = default;
};

std::vector<std::uint8_t> encode(const ProbeMessage& msg);

enum class DecodeStatus { ok, incomplete, bad_magic };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::incomplete;
  ProbeMessage message;
  std::size_t consumed = 0;  // frame length to drop from the buffer
};

/// Decodes the first frame in `bytes`. A frame with a wrong magic is still
/// skipped by its declared length.
DecodeResult decode(std::span<const std::uint8_t> bytes);

struct RTTSample {
  std::uint32_t seq = 0;
  std::uint64_t rtt_ns = 0;
  bool lost = false;

  bool operator==(const RTTSample&) const = default;
};

struct LatencyStats {
  std::size_t n = 0;       // all samples
  std::size_t n_lost = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;  // ns
};

/// Linear interpolation between order statistics at h = (n - 1) p over a
/// sorted sample (the "inclusive" quartile convention).
double quantile_inclusive(std::span<const double> sorted, double p);

/// Quartile summary over non-lost samples. Throws if every sample is lost.
LatencyStats summarize(std::span<const RTTSample> samples);

/// Fraction of all probes (lost ones count as failures) with rtt <= bound.
double fraction_within(std::span<const RTTSample> samples, std::uint64_t bound_ns);

enum class ChannelKind { fixed, uniform, lognormal };

/// One-way delay model applied independently to each direction.
struct ChannelModel {
  ChannelKind kind = ChannelKind::fixed;
  double one_way_ns = 0;           // fixed
  double lo_ns = 0, hi_ns = 0;     // uniform
  double mu_ln_ns = 0, sigma = 0;  // lognormal: ln(delay_ns) ~ N(mu, sigma^2)
  double drop_prob = 0;            // per direction
  std::uint64_t seed = 0;

  void validate() const;
};

/// Built-in profiles: "ethernet-fixed", "lan-uniform", "wifi-lognormal".
ChannelModel channel_profile(const std::string& name, std::uint64_t seed = 0);
std::vector<std::string> channel_profile_names();

/// Loads a profile from a JSON file, e.g.
/// {"kind": "lognormal", "median_one_way_ms": 120, "sigma": 0.6, "drop_prob": 0.005}.
ChannelModel load_channel_profile(const std::string& path, std::uint64_t seed = 0);

/// Seeded generator with a platform-independent stream: mt19937_64 bits,
/// 53-bit uniforms, Box-Muller normals.
class ChannelRng {
 public:
  explicit ChannelRng(std::uint64_t seed);
  double uniform01();  // [0, 1)
  double normal();
  /// One-way delay in ns; always consumes exactly two uniforms.
  double one_way_delay(const ChannelModel& ch);

 private:
  std::mt19937_64 gen_;
};

/// rtt_i = delay_out_i + delay_back_i (each rounded to whole ns); a probe is
/// lost if either direction drops. Per probe the draws are, in order:
/// drop-out, delay-out, drop-back, delay-back.
std::vector<RTTSample> simulate_rtt(const ChannelModel& channel, std::size_t n_probes);

/// Monotonic nanosecond clock used for send and receive timestamps.
using Clock = std::function<std::uint64_t()>;
std::uint64_t steady_now_ns();

/// max(0, t_recv - t_send) in unsigned arithmetic.
inline std::uint64_t elapsed_ns(std::uint64_t t_send, std::uint64_t t_recv) {
  return t_recv >= t_send ? t_recv - t_send : 0;
}

/// TCP echo server. Binds in the constructor (throws IoError on failure) and
/// serves on a background thread until stop() or destruction.
class EchoServer {
 public:
  explicit EchoServer(const std::string& bind_endpoint);
  ~EchoServer();
  EchoServer(const EchoServer&) = delete;
  EchoServer& operator=(const EchoServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();
  /// Blocks the caller until stop() is requested from elsewhere.
  void wait();

  std::uint64_t acked() const { return acked_.load(); }
  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> acked_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
};

struct ProberOptions {
  std::string target;  // host:port
  std::size_t n_probes = 1000;
  int interval_ms = 250;
  int timeout_ms = 1000;
  std::size_t payload_len = 64;
  Clock clock = steady_now_ns;
};

struct ProbeRun {
  std::vector<RTTSample> samples;
  bool connect_error = false;
  std::string error;
};

/// Stop-and-wait probing: one outstanding probe at a time, acks for older
/// sequence numbers are discarded.
ProbeRun run_prober(const ProberOptions& options);

/// `seq,rtt_ns,lost` with lost as 0/1.
void write_samples_csv(const std::string& path, std::span<const RTTSample> samples);
std::vector<RTTSample> read_samples_csv(const std::string& path);

/// Splits "host:port"; throws InvalidParameter on malformed input.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace bemctl::latency
