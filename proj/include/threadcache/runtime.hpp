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

// threadcache: recycle logically terminated threads.
//
// A Runtime hands out logical threads. Each spawn first tries to pop a
// parked physical thread from a LIFO idle store and falls back to creating
// a new OS thread. When a logical thread ends, its physical thread fires the
// task's join latch, asks the retention policy whether to stay, and parks on
// the idle store until the next spawn wakes it.
//
//   threadcache::Runtime rt;
//   auto h = rt.spawn([] { return 7; });
//   assert(rt.join(h).value == 7);
//
// Thread-local storage is NOT reset between logical threads served by the
// same physical thread. Code run under the cache must not rely on fresh
// thread_local values; `add_task_initializer` offers an opt-in reset point.

#pragma once

#include <pthread.h>

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <system_error>
#include <type_traits>
#include <utility>

#include "threadcache/clock.hpp"
#include "threadcache/retention.hpp"

namespace threadcache {

// The word a logical thread ends with: the value its entry returned or the
// value handed to logical_exit. `poisoned` marks an exception that escaped
// the entry function.
struct ExitStatus {
  std::uintptr_t value = 0;
  bool poisoned = false;

  static ExitStatus of(void* p) noexcept {
    return ExitStatus{reinterpret_cast<std::uintptr_t>(p), false};
  }
  static ExitStatus of(std::uintptr_t v) noexcept { return ExitStatus{v, false}; }
  static ExitStatus poison() noexcept { return ExitStatus{0, true}; }

  void* as_pointer() const noexcept { return reinterpret_cast<void*>(value); }

  friend bool operator==(const ExitStatus&, const ExitStatus&) = default;
};

// Counter snapshot. Counters are monotonic; `current_*` are gauges. Fields
// are read individually with relaxed loads, so a snapshot taken while
// threads are spawning is monotonic but not a single linearized instant.
// `busy` counts physical threads that serve a logical thread or are on
// their way back to the idle store.
struct CacheStats {
  std::uint64_t spawns_total = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t physical_creates = 0;
  std::uint64_t physical_culls = 0;
  std::uint64_t current_idle = 0;
  std::uint64_t peak_idle = 0;
  std::uint64_t current_busy = 0;
  std::uint64_t peak_busy = 0;

  double hit_rate() const noexcept {
    return spawns_total == 0 ? 0.0
                             : static_cast<double>(cache_hits) /
                                   static_cast<double>(spawns_total);
  }
};

// Counter deltas between two snapshots; gauges are taken from `after`.
CacheStats delta(const CacheStats& before, const CacheStats& after) noexcept;

// Raw entry points of the platform thread library. The runtime never calls
// pthread_create and friends by name so that an interposing library can
// route its own physical threads to the real implementation.
struct PlatformThreads {
  using CreateFn = int (*)(pthread_t*, const pthread_attr_t*, void* (*)(void*), void*);
  using ExitFn = void (*)(void*);
  using JoinFn = int (*)(pthread_t, void**);
  using DetachFn = int (*)(pthread_t);

  CreateFn create = nullptr;
  ExitFn exit = nullptr;
  JoinFn join = nullptr;
  DetachFn detach = nullptr;

  static PlatformThreads native() noexcept;
  bool complete() const noexcept { return create && exit && join && detach; }
};

struct RuntimeConfig {
  // false reproduces the uncached baseline: every spawn creates an OS
  // thread and every logical exit ends it.
  bool caching = true;
  RetentionConfig retention;
  std::size_t shards = 1;
  // 0 keeps the platform default.
  std::size_t stack_size = 0;
  // Busy-wait rounds before a parked worker or a joiner sleeps in the
  // kernel. Negative picks a value from the CPU count.
  int spin_rounds = -1;
  PlatformThreads platform = PlatformThreads::native();
  ClockSource clock;
  // Runs on the serving worker when a task completes after having been
  // detached. Tasks detached after completion are the detacher's business.
  void (*on_detached_complete)(std::uint64_t logical_id, void* ctx) = nullptr;
  void* hook_ctx = nullptr;

  // THREADCACHE=0 disables caching; retention comes from
  // RetentionConfig::from_env.
  static RuntimeConfig from_env(const RetentionConfig::EnvLookup& lookup = {});
};

namespace detail {
struct Task;
struct RuntimeImpl;
}  // namespace detail

// Owning reference to one logical thread. Joinable until joined or
// detached; dropping a joinable handle detaches it.
class JoinHandle {
 public:
  JoinHandle() = default;
  JoinHandle(JoinHandle&& other) noexcept
      : task_(std::exchange(other.task_, nullptr)) {}
  JoinHandle& operator=(JoinHandle&& other) noexcept;
  JoinHandle(const JoinHandle&) = delete;
  JoinHandle& operator=(const JoinHandle&) = delete;
  ~JoinHandle();

  bool valid() const noexcept { return task_ != nullptr; }
  explicit operator bool() const noexcept { return valid(); }

  std::uint64_t logical_id() const noexcept;
  // True once the task's latch has fired.
  bool finished() const noexcept;
  bool detached() const noexcept;
  // Worker that served the task; 0 until the task finished.
  std::uint64_t served_by() const noexcept;

 private:
  friend struct detail::RuntimeImpl;
  friend class Runtime;
  explicit JoinHandle(detail::Task* t) noexcept : task_(t) {}
  void reset() noexcept;

  detail::Task* task_ = nullptr;
};

class Runtime {
 public:
  using RawEntry = void* (*)(void*);

  explicit Runtime(RuntimeConfig config = {});
  // Culls every idle worker and waits for busy ones to finish their task.
  // No spawn may race with destruction.
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  // Process-wide runtime configured from the environment. Never destroyed.
  static Runtime& global();

  // Throws std::system_error (resource_unavailable_try_again) when the OS
  // refuses a new thread.
  JoinHandle spawn(RawEntry entry, void* arg);

  // Any callable. Integral and pointer results become the exit value.
  template <typename F>
  JoinHandle spawn(F&& fn) {
    using Fn = std::decay_t<F>;
    auto boxed = std::make_unique<Fn>(std::forward<F>(fn));
    JoinHandle h = spawn(&invoke_boxed<Fn>, boxed.get());
    boxed.release();
    return h;
  }

  std::errc try_spawn(RawEntry entry, void* arg, JoinHandle& out) noexcept;

  // Blocks until the task's latch fires. Everything the task wrote
  // happens-before the return. Throws std::system_error with
  // invalid_argument for a detached or already joined handle and
  // resource_deadlock_would_occur for a self-join.
  ExitStatus join(JoinHandle& handle);
  std::errc try_join(JoinHandle& handle, ExitStatus& out) noexcept;

  // Throws std::system_error(invalid_argument) unless joinable.
  void detach(JoinHandle& handle);
  std::errc try_detach(JoinHandle& handle) noexcept;

  // Detaches the logical thread the caller is running, like
  // pthread_detach(pthread_self()). invalid_argument off-runtime or when
  // already detached or joined.
  static std::errc detach_current() noexcept;

  CacheStats stats() const noexcept;
  const RuntimeConfig& config() const noexcept;
  bool caching() const noexcept;

  // Applies the retention policy's maintenance pass once, now. Returns the
  // number of workers culled.
  std::size_t reap_now();
  // Releases dead stack pages of every idle worker parked longer than
  // `min_idle`. Returns how many workers were advised.
  std::size_t release_idle_stacks(Nanos min_idle);
  // Waits until no physical thread is busy. Returns false on timeout.
  bool wait_quiescent(std::chrono::milliseconds timeout = std::chrono::seconds(10)) const;

  // Runs before every task on the serving thread; the opt-in point for
  // resetting thread-local state between logical threads.
  void add_task_initializer(std::function<void()> fn);

  // Stops caching for good: idle workers are culled and every worker that
  // finishes a task from now on exits. Spawns still work, uncached.
  void drain();

  // Id of the physical worker running the caller, or 0 off-runtime.
  static std::uint64_t current_worker_id() noexcept;
  // Logical id of the task the caller is running, or 0.
  static std::uint64_t current_logical_id() noexcept;

 private:
  template <typename Fn>
  static void* invoke_boxed(void* p) {
    std::unique_ptr<Fn> fn(static_cast<Fn*>(p));
    using R = std::invoke_result_t<Fn&>;
    if constexpr (std::is_void_v<R>) {
      (*fn)();
      return nullptr;
    } else if constexpr (std::is_same_v<R, ExitStatus>) {
      return (*fn)().as_pointer();
    } else if constexpr (std::is_pointer_v<R>) {
      return const_cast<void*>(static_cast<const void*>((*fn)()));
    } else {
      static_assert(std::is_integral_v<R> || std::is_enum_v<R>,
                    "task result must be void, integral, pointer or ExitStatus");
      return reinterpret_cast<void*>(static_cast<std::uintptr_t>((*fn)()));
    }
  }

  std::unique_ptr<detail::RuntimeImpl> impl_;
};

// Ends the calling logical thread with `status`. Frames between the task's
// entry and this call are unwound (destructors run) and the physical thread
// returns to its dispatch loop. Unwinding through a noexcept frame
// terminates the process, as with pthread_exit; a catch (...) block that
// swallows the unwind aborts. On a thread the runtime does not manage this
// is pthread_exit.
[[noreturn]] void logical_exit(ExitStatus status);
[[noreturn]] inline void logical_exit(void* value) { logical_exit(ExitStatus::of(value)); }

// True on a thread currently serving a logical thread.
bool in_logical_thread() noexcept;

}  // namespace threadcache
