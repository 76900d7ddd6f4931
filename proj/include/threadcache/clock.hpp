// Copyright 2026 The threadcache Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>

namespace threadcache {

// Monotonic timestamps are plain nanosecond counts so they can live in
// atomics and be produced by test clocks.
using Nanos = std::int64_t;

inline constexpr Nanos kNanosPerSecond = 1'000'000'000;
inline constexpr Nanos kNanosPerMilli = 1'000'000;

inline Nanos monotonic_now() noexcept {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline constexpr double to_seconds(Nanos ns) noexcept {
  return static_cast<double>(ns) / static_cast<double>(kNanosPerSecond);
}

// A pluggable time source. The default reads the monotonic clock; tests
// substitute a manual clock to script idle ages exactly.
struct ClockSource {
  Nanos (*read)(const void* ctx) = nullptr;
  const void* ctx = nullptr;

  Nanos now() const noexcept { return read ? read(ctx) : monotonic_now(); }
};

class ManualClock {
 public:
  explicit ManualClock(Nanos start = 0) : now_(start) {}

  Nanos now() const noexcept { return now_; }
  void set(Nanos t) noexcept { now_ = t; }
  void advance(Nanos dt) noexcept { now_ += dt; }

  ClockSource source() const noexcept {
    return ClockSource{
        [](const void* ctx) { return static_cast<const ManualClock*>(ctx)->now_; },
        this};
  }

 private:
  Nanos now_;
};

}  // namespace threadcache
