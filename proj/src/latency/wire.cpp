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
#include <limits>

#include "bemctl/errors.hpp"
#include "bemctl/latency.hpp"

namespace bemctl::latency {
namespace {

template <typename T>
void put_be(std::vector<std::uint8_t>& out, T v) {
  for (int shift = (sizeof(T) - 1) * 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
  }
}

template <typename T>
T get_be(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>((v << 8) | p[i]);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const ProbeMessage& msg) {
  if (msg.payload.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidParameter("probe payload exceeds 65535 bytes");
  }
  std::vector<std::uint8_t> out;
  out.reserve(msg.wire_size());
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_be<std::uint32_t>(out, msg.seq);
  put_be<std::uint64_t>(out, msg.t_send);
  put_be<std::uint16_t>(out, static_cast<std::uint16_t>(msg.payload.size()));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  if (bytes.size() < kHeaderSize) return r;
  const std::uint8_t* p = bytes.data();
  const std::uint16_t len = get_be<std::uint16_t>(p + 16);
  if (bytes.size() < kHeaderSize + len) return r;
  r.consumed = kHeaderSize + len;
  if (!std::equal(std::begin(kMagic), std::end(kMagic), p)) {
    r.status = DecodeStatus::bad_magic;
    return r;
  }
  r.status = DecodeStatus::ok;
  r.message.seq = get_be<std::uint32_t>(p + 4);
  r.message.t_send = get_be<std::uint64_t>(p + 8);
  r.message.payload.assign(p + kHeaderSize, p + kHeaderSize + len);
  return r;
}

}  // namespace bemctl::latency
