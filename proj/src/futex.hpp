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

#include <atomic>
#include <climits>
#include <cstdint>

#if defined(__linux__)
#include <linux/futex.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace threadcache::detail {

// Blocks while `word` holds `expected`. May return spuriously.
inline void futex_wait(std::atomic<std::uint32_t>& word, std::uint32_t expected) noexcept {
#if defined(__linux__)
  syscall(SYS_futex, reinterpret_cast<std::uint32_t*>(&word), FUTEX_WAIT_PRIVATE,
          expected, nullptr, nullptr, 0);
#else
  word.wait(expected, std::memory_order_acquire);
#endif
}

inline void futex_wake(std::atomic<std::uint32_t>& word, int count) noexcept {
#if defined(__linux__)
  syscall(SYS_futex, reinterpret_cast<std::uint32_t*>(&word), FUTEX_WAKE_PRIVATE,
          count, nullptr, nullptr, 0);
#else
  if (count == 1) {
    word.notify_one();
  } else {
    word.notify_all();
  }
#endif
}

inline void cpu_relax() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#elif defined(__aarch64__)
  asm volatile("yield");
#endif
}

// One-shot signal: pending -> fired, with at most a handful of waiters.
class OneShot {
 public:
  bool fired() const noexcept {
    return word_.load(std::memory_order_acquire) == kFired;
  }

  void fire() noexcept {
    // seq_cst pairs with the detach path, which stores the join state and
    // then loads this word.
    if (word_.exchange(kFired, std::memory_order_seq_cst) == kWaiting) {
      futex_wake(word_, INT_MAX);
    }
  }

  void wait(int spin_rounds) noexcept {
    for (int i = 0; i < spin_rounds; ++i) {
      if (fired()) return;
      cpu_relax();
    }
    std::uint32_t w = kPending;
    word_.compare_exchange_strong(w, kWaiting, std::memory_order_acquire);
    while (word_.load(std::memory_order_acquire) != kFired) {
      futex_wait(word_, kWaiting);
    }
  }

 private:
  static constexpr std::uint32_t kPending = 0;
  static constexpr std::uint32_t kWaiting = 1;
  static constexpr std::uint32_t kFired = 2;
  std::atomic<std::uint32_t> word_{kPending};
};

}  // namespace threadcache::detail
