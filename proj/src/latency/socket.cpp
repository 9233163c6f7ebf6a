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

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "bemctl/errors.hpp"
#include "bemctl/latency.hpp"

namespace bemctl::latency {
namespace {

constexpr int kPollSliceMs = 50;

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

std::string errno_str() { return std::strerror(errno); }

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_s = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_s.c_str(), &hints, &res);
  if (rc != 0) {
    throw IoError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  }
  return res;
}

bool send_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd p{fd, POLLOUT, 0};
        ::poll(&p, 1, kPollSliceMs);
        continue;
      }
      return false;
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

std::uint64_t steady_now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 >= endpoint.size()) {
    throw InvalidParameter("endpoint '" + endpoint + "' must be host:port");
  }
  std::string host = endpoint.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(endpoint.substr(colon + 1), &used);
    if (used != endpoint.size() - colon - 1) throw std::invalid_argument("junk");
  } catch (const std::exception&) {
    throw InvalidParameter("endpoint '" + endpoint + "': bad port");
  }
  if (port > 65535) throw InvalidParameter("endpoint '" + endpoint + "': port out of range");
  return {host, static_cast<std::uint16_t>(port)};
}

EchoServer::EchoServer(const std::string& bind_endpoint) {
  const auto [host, port] = parse_endpoint(bind_endpoint);
  addrinfo* res = resolve(host, port, true);
  std::string last_err = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Fd fd(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (fd.get() < 0) {
      last_err = errno_str();
      continue;
    }
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd.get(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(fd.get(), 16) != 0) {
      last_err = errno_str();
      continue;
    }
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&ss), &len);
    port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    listen_fd_ = fd.release();
    break;
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) {
    throw IoError("cannot bind '" + bind_endpoint + "': " + last_err);
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

EchoServer::~EchoServer() { stop(); }

void EchoServer::stop() {
  stop_.store(true);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

void EchoServer::wait() {
  while (!stop_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(kPollSliceMs));
}

void EchoServer::accept_loop() {
  while (!stop_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, kPollSliceMs);
    if (rc <= 0) continue;
    const int cfd = ::accept(listen_fd_, nullptr, nullptr);
    if (cfd < 0) continue;
    set_nodelay(cfd);
    workers_.emplace_back([this, cfd] { serve_connection(cfd); });
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
}

void EchoServer::serve_connection(int raw_fd) {
  Fd fd(raw_fd);
  std::vector<std::uint8_t> buf;
  std::uint8_t chunk[4096];
  while (!stop_.load()) {
    pollfd p{fd.get(), POLLIN, 0};
    const int rc = ::poll(&p, 1, kPollSliceMs);
    if (rc < 0 && errno != EINTR) return;
    if (rc <= 0) continue;
    const ssize_t n = ::recv(fd.get(), chunk, sizeof(chunk), 0);
    if (n == 0) return;
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return;
    }
    buf.insert(buf.end(), chunk, chunk + n);
    std::size_t off = 0;
    while (true) {
      const auto r = decode(std::span<const std::uint8_t>(buf).subspan(off));
      if (r.status == DecodeStatus::incomplete) break;
      if (r.status == DecodeStatus::bad_magic) {
        dropped_.fetch_add(1);
      } else {
        if (!send_all(fd.get(), buf.data() + off, r.consumed)) return;
        acked_.fetch_add(1);
      }
      off += r.consumed;
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(off));
  }
}

namespace {

Fd connect_with_timeout(const std::string& target, int timeout_ms, std::string& err) {
  const auto [host, port] = parse_endpoint(target);
  addrinfo* res = nullptr;
  try {
    res = resolve(host, port, false);
  } catch (const IoError& e) {
    err = e.what();
    return Fd();
  }
  Fd result;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Fd fd(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (fd.get() < 0) {
      err = errno_str();
      continue;
    }
    const int flags = ::fcntl(fd.get(), F_GETFL, 0);
    ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd.get(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno != EINPROGRESS) {
      err = errno_str();
      continue;
    }
    if (rc != 0) {
      pollfd p{fd.get(), POLLOUT, 0};
      rc = ::poll(&p, 1, timeout_ms);
      int so_err = 0;
      socklen_t len = sizeof(so_err);
      ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &so_err, &len);
      if (rc <= 0 || so_err != 0) {
        err = rc <= 0 ? "connect timed out" : std::strerror(so_err);
        continue;
      }
    }
    set_nodelay(fd.get());
    result = std::move(fd);
    break;
  }
  ::freeaddrinfo(res);
  return result;
}

}  // namespace

ProbeRun run_prober(const ProberOptions& opt) {
  if (opt.n_probes < 1) throw InvalidParameter("run_prober: n_probes must be >= 1");
  if (opt.payload_len > 65535) throw InvalidParameter("run_prober: payload too large");
  if (opt.timeout_ms < 0 || opt.interval_ms < 0) {
    throw InvalidParameter("run_prober: negative timeout or interval");
  }
  const Clock clock = opt.clock ? opt.clock : Clock(steady_now_ns);

  ProbeRun run;
  run.samples.reserve(opt.n_probes);
  auto mark_all_lost = [&](std::size_t from) {
    for (std::size_t i = from; i < opt.n_probes; ++i) {
      run.samples.push_back({static_cast<std::uint32_t>(i), 0, true});
    }
  };

  Fd fd = connect_with_timeout(opt.target, std::max(opt.timeout_ms, 1000), run.error);
  if (fd.get() < 0) {
    run.connect_error = true;
    mark_all_lost(0);
    return run;
  }

  ProbeMessage msg;
  msg.payload.assign(opt.payload_len, 0xA5);
  std::vector<std::uint8_t> rx;
  std::uint8_t chunk[4096];

  for (std::size_t i = 0; i < opt.n_probes; ++i) {
    const auto wall_start = std::chrono::steady_clock::now();
    RTTSample sample{static_cast<std::uint32_t>(i), 0, true};
    msg.seq = sample.seq;
    msg.t_send = clock();
    const auto frame = encode(msg);
    if (!send_all(fd.get(), frame.data(), frame.size())) {
      run.connect_error = true;
      run.error = "send failed: " + errno_str();
      mark_all_lost(i);
      return run;
    }
    const auto deadline = wall_start + std::chrono::milliseconds(opt.timeout_ms);
    bool done = opt.timeout_ms == 0;
    while (!done) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) break;
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
      pollfd p{fd.get(), POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(remaining));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) break;
      const ssize_t n = ::recv(fd.get(), chunk, sizeof(chunk), 0);
      if (n <= 0) {
        if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
        run.connect_error = true;
        run.error = "connection closed by peer";
        run.samples.push_back(sample);
        mark_all_lost(i + 1);
        return run;
      }
      const std::uint64_t t_recv = clock();
      rx.insert(rx.end(), chunk, chunk + n);
      std::size_t off = 0;
      while (true) {
        const auto r = decode(std::span<const std::uint8_t>(rx).subspan(off));
        if (r.status == DecodeStatus::incomplete) break;
        off += r.consumed;
        // Acks of earlier probes that already timed out are discarded.
        if (r.status == DecodeStatus::ok && r.message.seq == sample.seq) {
          sample.rtt_ns = elapsed_ns(r.message.t_send, t_recv);
          sample.lost = false;
          done = true;
        }
      }
      rx.erase(rx.begin(), rx.begin() + static_cast<std::ptrdiff_t>(off));
    }
    run.samples.push_back(sample);
    if (i + 1 < opt.n_probes) {
      std::this_thread::sleep_until(wall_start + std::chrono::milliseconds(opt.interval_ms));
    }
  }
  return run;
}

}  // namespace bemctl::latency
