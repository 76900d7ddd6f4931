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

#include "threadcache/runtime.hpp"

#include <cxxabi.h>
#include <sched.h>
#include <unwind.h>

#include <algorithm>
#include <cassert>
#include <condition_variable>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <new>
#include <thread>
#include <vector>

#include "futex.hpp"
#include "threadcache/idle_store.hpp"

namespace threadcache {
namespace detail {

enum class WorkerState : std::uint8_t { kNascent, kRunning, kIdle, kTerminating };
enum class JoinState : std::uint8_t { kJoinable, kDetached, kJoined };

struct Task {
  Runtime::RawEntry entry = nullptr;
  void* arg = nullptr;
  RuntimeImpl* owner = nullptr;
  std::uint64_t logical_id = 0;
  OneShot latch;
  ExitStatus status;
  std::atomic<std::uint64_t> served_by{0};
  std::atomic<JoinState> join_state{JoinState::kJoinable};
  // One reference for the handle, one for the serving worker.
  std::atomic<int> refs{2};
};

void release(Task* t) noexcept {
  if (t->refs.fetch_sub(1, std::memory_order_acq_rel) == 1) delete t;
}

// Park slot values. The worker owns the transition back to kSlotEmpty.
constexpr std::uint32_t kSlotEmpty = 0;
constexpr std::uint32_t kSlotSleeping = 1;
constexpr std::uint32_t kSlotTask = 2;
constexpr std::uint32_t kSlotTerminate = 3;

constexpr _Unwind_Exception_Class kLogicalExitClass = 0x5443414348455854ULL;  // "TCACHEXT"
constexpr int kReturnWaitRounds = 256;

struct Worker final : IdleNode {
  RuntimeImpl* rt = nullptr;
  std::uint64_t id = 0;
  std::atomic<WorkerState> state{WorkerState::kNascent};

  std::atomic<std::uint32_t> slot{kSlotEmpty};
  Task* delivered = nullptr;
  Task* current = nullptr;

  StackExtent stack;
  // Lowest live stack address of a parked worker, minus slack; 0 when not
  // parked. Pages below it are dead.
  std::atomic<std::uintptr_t> park_watermark{0};
  std::atomic<bool> stack_released{false};

  // logical_exit lands here.
  std::jmp_buf anchor;
  std::uintptr_t anchor_frame = 0;
  ExitStatus exit_status;
  _Unwind_Exception unwind_exc;
};

constinit thread_local Worker* tls_worker = nullptr;

void transition(Worker& w, [[maybe_unused]] WorkerState from, WorkerState to) noexcept {
  assert((from == WorkerState::kNascent && to == WorkerState::kRunning) ||
         (from == WorkerState::kRunning &&
          (to == WorkerState::kIdle || to == WorkerState::kTerminating)) ||
         (from == WorkerState::kIdle &&
          (to == WorkerState::kRunning || to == WorkerState::kTerminating)));
  [[maybe_unused]] WorkerState seen =
      w.state.exchange(to, std::memory_order_acq_rel);
  assert(seen == from);
}

struct alignas(64) PaddedCounter {
  std::atomic<std::uint64_t> v{0};

  void add() noexcept { v.fetch_add(1, std::memory_order_relaxed); }
  void sub_release() noexcept { v.fetch_sub(1, std::memory_order_release); }
  std::uint64_t get() const noexcept { return v.load(std::memory_order_relaxed); }
  std::uint64_t get_acquire() const noexcept { return v.load(std::memory_order_acquire); }
  void raise_to(std::uint64_t x) noexcept {
    std::uint64_t cur = v.load(std::memory_order_relaxed);
    while (cur < x &&
           !v.compare_exchange_weak(cur, x, std::memory_order_relaxed)) {
    }
  }
};

StackExtent current_stack_extent() noexcept {
  StackExtent e;
#if defined(__linux__)
  pthread_attr_t attr;
  if (pthread_getattr_np(pthread_self(), &attr) == 0) {
    void* addr = nullptr;
    std::size_t size = 0;
    if (pthread_attr_getstack(&attr, &addr, &size) == 0) {
      e.low = reinterpret_cast<std::uintptr_t>(addr);
      e.high = e.low + size;
    }
    pthread_attr_destroy(&attr);
  }
#endif
  return e;
}

void* worker_main(void* p);
void* reaper_main(void* p);

struct RuntimeImpl {
  explicit RuntimeImpl(RuntimeConfig c)
      : cfg(std::move(c)), stores(cfg.shards, cfg.clock) {
    cfg.retention.validate();
    if (!cfg.platform.complete()) cfg.platform = PlatformThreads::native();
    spin = cfg.spin_rounds >= 0
               ? cfg.spin_rounds
               : (std::thread::hardware_concurrency() > 1 ? 100 : 0);
    if (cfg.caching && cfg.retention.needs_reaper()) start_reaper();
  }

  ~RuntimeImpl() {
    drain();
    std::unique_lock<std::mutex> lock(live_mu);
    live_cv.wait(lock, [&] { return live_workers == 0; });
  }

  void drain() {
    stop_reaper();
    shutting_down.store(true, std::memory_order_seq_cst);
    cull_all();
  }

  void cull_all() {
    for (std::size_t i = 0; i < stores.shard_count(); ++i) {
      order_terminate(stores.shard(i).cull_oldest(static_cast<std::size_t>(-1)));
    }
  }

  // --- spawn side -------------------------------------------------------

  std::errc try_spawn(Runtime::RawEntry entry, void* arg, JoinHandle& out) noexcept {
    if (entry == nullptr) return std::errc::invalid_argument;
    Task* t = new (std::nothrow) Task;
    if (t == nullptr) return std::errc::not_enough_memory;
    t->entry = entry;
    t->arg = arg;
    t->owner = this;
    t->logical_id = next_logical_id.fetch_add(1, std::memory_order_relaxed);

    busy_up();
    if (cfg.caching) {
      if (IdleNode* n = pop_or_await_returning()) {
        Worker& w = static_cast<Worker&>(*n);
        transition(w, WorkerState::kIdle, WorkerState::kRunning);
        cache_hits.add();
        spawns.add();
        out = JoinHandle(t);
        deliver(w, t);
        return {};
      }
    }
    if (std::errc ec = create_worker(t); ec != std::errc{}) {
      busy_down();
      delete t;
      return ec;
    }
    physical_creates.add();
    spawns.add();
    out = JoinHandle(t);
    return {};
  }

  // A worker whose latch fired is a few instructions away from the store.
  // Without waiting for it, spawn;join;spawn on one thread would create a
  // new worker whenever the first one is preempted in between. The wait is
  // bounded: a detached-completion hook may be running arbitrary code.
  IdleNode* pop_or_await_returning() noexcept {
    if (IdleNode* n = stores.pop()) return n;
    for (int i = 0; i < kReturnWaitRounds; ++i) {
      if (returning.get_acquire() == 0) return stores.pop();
      sched_yield();
      if (IdleNode* n = stores.pop()) return n;
    }
    return nullptr;
  }

  std::errc create_worker(Task* first) noexcept {
    Worker* w = new (std::nothrow) Worker;
    if (w == nullptr) return std::errc::not_enough_memory;
    w->rt = this;
    w->id = next_worker_id.fetch_add(1, std::memory_order_relaxed);
    w->delivered = first;

    pthread_attr_t attr;
    pthread_attr_init(&attr);
    pthread_attr_setdetachstate(&attr, PTHREAD_CREATE_DETACHED);
    if (cfg.stack_size != 0) pthread_attr_setstacksize(&attr, cfg.stack_size);
    {
      std::lock_guard<std::mutex> lock(live_mu);
      ++live_workers;
    }
    pthread_t tid;
    int rc = cfg.platform.create(&tid, &attr, &worker_main, w);
    pthread_attr_destroy(&attr);
    if (rc != 0) {
      delete w;
      worker_gone();
      return static_cast<std::errc>(rc);
    }
    return {};
  }

  static void deliver(Worker& w, Task* t) noexcept {
    w.delivered = t;
    if (w.slot.exchange(kSlotTask, std::memory_order_acq_rel) == kSlotSleeping) {
      futex_wake(w.slot, 1);
    }
  }

  void order_terminate(const std::vector<IdleNode*>& victims) noexcept {
    for (IdleNode* n : victims) {
      Worker& w = static_cast<Worker&>(*n);
      transition(w, WorkerState::kIdle, WorkerState::kTerminating);
      physical_culls.add();
      // The victim may wake spuriously, see the order and free itself
      // before the wake below; futex wakes on stale addresses are harmless.
      if (w.slot.exchange(kSlotTerminate, std::memory_order_acq_rel) == kSlotSleeping) {
        futex_wake(w.slot, 1);
      }
    }
  }

  // --- worker side ------------------------------------------------------

  void dispatch_loop(Worker& w) {
    Task* t = std::exchange(w.delivered, nullptr);
    transition(w, WorkerState::kNascent, WorkerState::kRunning);
    while (t != nullptr) {
      run_task(w, *t);
      complete(w, t);
      t = recycle(w);
    }
  }

  [[gnu::noinline]] void run_task(Worker& w, Task& t) {
    w.current = &t;
    w.exit_status = ExitStatus{};
    w.anchor_frame = ~std::uintptr_t{0};
    if (setjmp(w.anchor) == 0) {
      try {
        w.exit_status = ExitStatus::of(invoke_entry(w, t));
      } catch (abi::__forced_unwind&) {
        // A genuine thread exit or cancellation: the physical thread dies.
        w.anchor_frame = 0;
        w.current = nullptr;
        w.exit_status = ExitStatus::poison();
        complete(w, &t);
        retire_running(w);
        throw;
      } catch (...) {
        w.exit_status = ExitStatus::poison();
      }
    }
    w.anchor_frame = 0;
    w.current = nullptr;
  }

  // libgcc reports a frame's CFA as the stack pointer inside that frame, so
  // the first frame at or above this function's CFA is run_task.
  [[gnu::noinline]] void* invoke_entry(Worker& w, Task& t) {
    w.anchor_frame = reinterpret_cast<std::uintptr_t>(__builtin_dwarf_cfa());
    run_initializers();
    void* r = t.entry(t.arg);
    asm volatile("" ::: "memory");
    return r;
  }

  void complete(Worker& w, Task* t) noexcept {
    t->status = w.exit_status;
    t->served_by.store(w.id, std::memory_order_relaxed);
    returning.add();
    t->latch.fire();
    if (t->join_state.load(std::memory_order_seq_cst) == JoinState::kDetached) {
      notify_detached(*t);
    }
    release(t);
  }

  // Returns the next task, or nullptr when the physical thread must exit.
  Task* recycle(Worker& w) {
    if (!cfg.caching || shutting_down.load(std::memory_order_seq_cst)) {
      retire_running(w);
      return nullptr;
    }
    IdleStore& store = stores.shard_for_current_cpu();
    AdmitDecision d = admit(store, cfg.retention);
    order_terminate(d.evictions);
    if (d.verdict == Verdict::kTerminate) {
      retire_running(w);
      return nullptr;
    }
    transition(w, WorkerState::kRunning, WorkerState::kIdle);
    store.push(w);
    returning.sub_release();
    peak_idle.raise_to(stores.size());
    // Only now stop counting as busy; see CacheStats.
    busy_down();
    order_terminate(enforce_clamp(store, cfg.retention));
    // Pairs with drain(): either its sweep saw us linked, or we see the flag
    // and sweep ourselves.
    std::atomic_thread_fence(std::memory_order_seq_cst);
    if (shutting_down.load(std::memory_order_seq_cst)) cull_all();
    return park(w);
  }

  void retire_running(Worker& w) noexcept {
    transition(w, WorkerState::kRunning, WorkerState::kTerminating);
    physical_culls.add();
    returning.sub_release();
    busy_down();
  }

  [[gnu::noinline]] Task* park(Worker& w) noexcept {
    for (int i = 0; i < spin; ++i) {
      if (w.slot.load(std::memory_order_acquire) >= kSlotTask) break;
      cpu_relax();
    }
    // Nothing this frame or the futex call touches lies more than a page
    // below `marker`; one more page is guard slack.
    volatile char marker = 0;
    std::uintptr_t sp = reinterpret_cast<std::uintptr_t>(&marker);
    w.park_watermark.store(sp - 2 * page_size(), std::memory_order_release);
    std::uint32_t s = kSlotEmpty;
    if (w.slot.compare_exchange_strong(s, kSlotSleeping, std::memory_order_acq_rel)) {
      while (w.slot.load(std::memory_order_acquire) == kSlotSleeping) {
        futex_wait(w.slot, kSlotSleeping);
      }
    }
    w.park_watermark.store(0, std::memory_order_relaxed);
    s = w.slot.load(std::memory_order_acquire);
    w.slot.store(kSlotEmpty, std::memory_order_relaxed);
    if (s == kSlotTask) {
      w.stack_released.store(false, std::memory_order_relaxed);
      return std::exchange(w.delivered, nullptr);
    }
    return nullptr;
  }

  void worker_gone() noexcept {
    std::lock_guard<std::mutex> lock(live_mu);
    --live_workers;
    live_cv.notify_all();
  }

  // --- join side --------------------------------------------------------

  std::errc try_join(JoinHandle& h, ExitStatus& out) noexcept {
    Task* t = h.task_;
    if (t == nullptr) return std::errc::invalid_argument;
    if (tls_worker != nullptr && tls_worker->current == t) {
      return std::errc::resource_deadlock_would_occur;
    }
    JoinState expected = JoinState::kJoinable;
    if (!t->join_state.compare_exchange_strong(expected, JoinState::kJoined,
                                               std::memory_order_acq_rel)) {
      return std::errc::invalid_argument;
    }
    t->latch.wait(spin);
    out = t->status;
    return {};
  }

  static std::errc try_detach(JoinHandle& h) noexcept {
    Task* t = h.task_;
    if (t == nullptr) return std::errc::invalid_argument;
    JoinState expected = JoinState::kJoinable;
    if (!t->join_state.compare_exchange_strong(expected, JoinState::kDetached,
                                               std::memory_order_seq_cst)) {
      return std::errc::invalid_argument;
    }
    return {};
  }

  static void notify_detached(Task& t) noexcept {
    const RuntimeConfig& c = t.owner->cfg;
    if (c.on_detached_complete) c.on_detached_complete(t.logical_id, c.hook_ctx);
  }

  // --- maintenance ------------------------------------------------------

  std::size_t reap_now() {
    Nanos now = stores.shard(0).now();
    std::size_t total = 0;
    for (std::size_t i = 0; i < stores.shard_count(); ++i) {
      auto culled = reap(stores.shard(i), now, cfg.retention);
      total += culled.size();
      order_terminate(culled);
    }
    return total;
  }

  std::size_t release_idle_stacks(Nanos min_idle) {
    std::size_t advised = 0;
    for (std::size_t i = 0; i < stores.shard_count(); ++i) {
      IdleStore& store = stores.shard(i);
      Nanos now = store.now();
      // Removals are blocked while we walk, so no listed worker can be
      // popped and start using its stack mid-advice.
      store.for_each_locked([&](IdleNode& n) {
        Worker& w = static_cast<Worker&>(n);
        if (w.stack_released.load(std::memory_order_relaxed)) return;
        if (now - w.idle_since.load(std::memory_order_relaxed) <= min_idle) return;
        std::uintptr_t mark = w.park_watermark.load(std::memory_order_acquire);
        if (mark == 0) return;
        if (release_stack_memory(w.stack, mark) == ReleaseResult::kAdvised) {
          w.stack_released.store(true, std::memory_order_relaxed);
          ++advised;
        }
      });
    }
    return advised;
  }

  void start_reaper() {
    pthread_t tid;
    if (cfg.platform.create(&tid, nullptr, &reaper_main, this) == 0) {
      reaper = tid;
      reaper_running.store(true, std::memory_order_release);
    } else {
      std::fprintf(stderr, "threadcache: could not start the maintenance thread\n");
    }
  }

  void stop_reaper() {
    if (!reaper_running.exchange(false, std::memory_order_acq_rel)) return;
    {
      std::lock_guard<std::mutex> lock(reaper_mu);
      reaper_stop = true;
    }
    reaper_cv.notify_all();
    cfg.platform.join(reaper, nullptr);
  }

  void reaper_loop() {
    std::unique_lock<std::mutex> lock(reaper_mu);
    for (;;) {
      reaper_cv.wait_for(lock, std::chrono::nanoseconds(cfg.retention.reap_period),
                         [&] { return reaper_stop; });
      if (reaper_stop) return;
      lock.unlock();
      reap_now();
      if (cfg.retention.release_after) release_idle_stacks(*cfg.retention.release_after);
      lock.lock();
    }
  }

  void run_initializers() {
    if (!has_initializers.load(std::memory_order_acquire)) return;
    std::vector<std::function<void()>> fns;
    {
      std::lock_guard<std::mutex> lock(init_mu);
      fns = initializers;
    }
    for (auto& fn : fns) fn();
  }

  void busy_up() noexcept {
    std::uint64_t now_busy = busy.v.fetch_add(1, std::memory_order_relaxed) + 1;
    peak_busy.raise_to(now_busy);
  }
  void busy_down() noexcept { busy.v.fetch_sub(1, std::memory_order_relaxed); }

  CacheStats snapshot() const noexcept {
    CacheStats s;
    s.spawns_total = spawns.get();
    s.cache_hits = cache_hits.get();
    s.physical_creates = physical_creates.get();
    s.physical_culls = physical_culls.get();
    s.current_idle = stores.size();
    s.peak_idle = std::max(peak_idle.get(), s.current_idle);
    s.current_busy = busy.get();
    s.peak_busy = std::max(peak_busy.get(), s.current_busy);
    return s;
  }

  RuntimeConfig cfg;
  int spin = 0;
  ShardedIdleStore stores;

  PaddedCounter spawns, cache_hits, physical_creates, physical_culls;
  PaddedCounter peak_idle, busy, peak_busy;
  // Workers between latch and store.
  PaddedCounter returning;
  std::atomic<std::uint64_t> next_worker_id{1};
  std::atomic<std::uint64_t> next_logical_id{1};
  std::atomic<bool> shutting_down{false};

  std::mutex live_mu;
  std::condition_variable live_cv;
  std::size_t live_workers = 0;

  std::mutex init_mu;
  std::vector<std::function<void()>> initializers;
  std::atomic<bool> has_initializers{false};

  std::mutex reaper_mu;
  std::condition_variable reaper_cv;
  bool reaper_stop = false;
  std::atomic<bool> reaper_running{false};
  pthread_t reaper{};
};

// Frees the worker however the thread leaves, including a genuine
// pthread_exit from inside a task.
struct WorkerExit {
  Worker* w;
  ~WorkerExit() {
    RuntimeImpl* rt = w->rt;
    tls_worker = nullptr;
    delete w;
    rt->worker_gone();
  }
};

void* worker_main(void* p) {
  Worker* w = static_cast<Worker*>(p);
  tls_worker = w;
  w->stack = current_stack_extent();
  WorkerExit guard{w};
  w->rt->dispatch_loop(*w);
  return nullptr;
}

void* reaper_main(void* p) {
  static_cast<RuntimeImpl*>(p)->reaper_loop();
  return nullptr;
}

// Called for every frame on the way up. Once the unwinder reaches the frame
// of run_task, or runs off the stack, jump back into it.
_Unwind_Reason_Code logical_exit_stop(int, _Unwind_Action actions,
                                      _Unwind_Exception_Class, _Unwind_Exception*,
                                      _Unwind_Context* ctx, void* param) {
  Worker* w = static_cast<Worker*>(param);
  if ((actions & _UA_END_OF_STACK) != 0 || _Unwind_GetCFA(ctx) >= w->anchor_frame) {
    std::longjmp(w->anchor, 1);
  }
  return _URC_NO_REASON;
}

void logical_exit_swallowed(_Unwind_Reason_Code, _Unwind_Exception*) {
  std::fputs("threadcache: logical_exit unwind was not rethrown by a catch block\n",
             stderr);
  std::abort();
}

}  // namespace detail

using detail::tls_worker;

CacheStats delta(const CacheStats& before, const CacheStats& after) noexcept {
  CacheStats d = after;
  d.spawns_total -= before.spawns_total;
  d.cache_hits -= before.cache_hits;
  d.physical_creates -= before.physical_creates;
  d.physical_culls -= before.physical_culls;
  return d;
}

PlatformThreads PlatformThreads::native() noexcept {
  return PlatformThreads{&pthread_create, &pthread_exit, &pthread_join, &pthread_detach};
}

RuntimeConfig RuntimeConfig::from_env(const RetentionConfig::EnvLookup& lookup) {
  RuntimeConfig cfg;
  cfg.retention = RetentionConfig::from_env(lookup);
  const char* v = lookup ? lookup("THREADCACHE") : std::getenv("THREADCACHE");
  if (v != nullptr) {
    if (std::strcmp(v, "0") == 0) {
      cfg.caching = false;
    } else if (std::strcmp(v, "1") != 0) {
      std::fprintf(stderr, "threadcache: ignoring malformed THREADCACHE=%s\n", v);
    }
  }
  return cfg;
}

// --- JoinHandle ---------------------------------------------------------

JoinHandle& JoinHandle::operator=(JoinHandle&& other) noexcept {
  if (this != &other) {
    reset();
    task_ = std::exchange(other.task_, nullptr);
  }
  return *this;
}

JoinHandle::~JoinHandle() { reset(); }

void JoinHandle::reset() noexcept {
  if (task_ == nullptr) return;
  detail::Task* t = std::exchange(task_, nullptr);
  auto expected = detail::JoinState::kJoinable;
  t->join_state.compare_exchange_strong(expected, detail::JoinState::kDetached,
                                        std::memory_order_seq_cst);
  detail::release(t);
}

std::uint64_t JoinHandle::logical_id() const noexcept {
  return task_ ? task_->logical_id : 0;
}

bool JoinHandle::finished() const noexcept { return task_ && task_->latch.fired(); }

bool JoinHandle::detached() const noexcept {
  return task_ && task_->join_state.load(std::memory_order_seq_cst) ==
                      detail::JoinState::kDetached;
}

std::uint64_t JoinHandle::served_by() const noexcept {
  return finished() ? task_->served_by.load(std::memory_order_relaxed) : 0;
}

// --- Runtime ------------------------------------------------------------

Runtime::Runtime(RuntimeConfig config)
    : impl_(std::make_unique<detail::RuntimeImpl>(std::move(config))) {}

Runtime::~Runtime() = default;

Runtime& Runtime::global() {
  static Runtime* rt = new Runtime(RuntimeConfig::from_env());
  return *rt;
}

JoinHandle Runtime::spawn(RawEntry entry, void* arg) {
  JoinHandle h;
  if (std::errc ec = impl_->try_spawn(entry, arg, h); ec != std::errc{}) {
    throw std::system_error(std::make_error_code(ec), "threadcache spawn");
  }
  return h;
}

std::errc Runtime::try_spawn(RawEntry entry, void* arg, JoinHandle& out) noexcept {
  return impl_->try_spawn(entry, arg, out);
}

ExitStatus Runtime::join(JoinHandle& handle) {
  ExitStatus s;
  if (std::errc ec = impl_->try_join(handle, s); ec != std::errc{}) {
    throw std::system_error(std::make_error_code(ec), "threadcache join");
  }
  return s;
}

std::errc Runtime::try_join(JoinHandle& handle, ExitStatus& out) noexcept {
  return impl_->try_join(handle, out);
}

void Runtime::detach(JoinHandle& handle) {
  if (std::errc ec = detail::RuntimeImpl::try_detach(handle); ec != std::errc{}) {
    throw std::system_error(std::make_error_code(ec), "threadcache detach");
  }
}

std::errc Runtime::try_detach(JoinHandle& handle) noexcept {
  return detail::RuntimeImpl::try_detach(handle);
}

CacheStats Runtime::stats() const noexcept { return impl_->snapshot(); }

const RuntimeConfig& Runtime::config() const noexcept { return impl_->cfg; }

bool Runtime::caching() const noexcept { return impl_->cfg.caching; }

std::size_t Runtime::reap_now() { return impl_->reap_now(); }

std::size_t Runtime::release_idle_stacks(Nanos min_idle) {
  return impl_->release_idle_stacks(min_idle);
}

bool Runtime::wait_quiescent(std::chrono::milliseconds timeout) const {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (impl_->busy.get() != 0) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::microseconds(50));
  }
  return true;
}

void Runtime::add_task_initializer(std::function<void()> fn) {
  std::lock_guard<std::mutex> lock(impl_->init_mu);
  impl_->initializers.push_back(std::move(fn));
  impl_->has_initializers.store(true, std::memory_order_release);
}

void Runtime::drain() { impl_->drain(); }

std::uint64_t Runtime::current_worker_id() noexcept {
  return tls_worker ? tls_worker->id : 0;
}

std::uint64_t Runtime::current_logical_id() noexcept {
  return tls_worker && tls_worker->current ? tls_worker->current->logical_id : 0;
}

std::errc Runtime::detach_current() noexcept {
  if (tls_worker == nullptr || tls_worker->current == nullptr) {
    return std::errc::invalid_argument;
  }
  auto expected = detail::JoinState::kJoinable;
  if (!tls_worker->current->join_state.compare_exchange_strong(
          expected, detail::JoinState::kDetached, std::memory_order_seq_cst)) {
    return std::errc::invalid_argument;
  }
  return {};
}

bool in_logical_thread() noexcept {
  return tls_worker != nullptr && tls_worker->anchor_frame != 0;
}

void logical_exit(ExitStatus status) {
  detail::Worker* w = tls_worker;
  if (w == nullptr || w->anchor_frame == 0) {
    pthread_exit(status.as_pointer());
  }
  w->exit_status = status;
  std::memset(&w->unwind_exc, 0, sizeof(w->unwind_exc));
  w->unwind_exc.exception_class = detail::kLogicalExitClass;
  w->unwind_exc.exception_cleanup = &detail::logical_exit_swallowed;
  _Unwind_ForcedUnwind(&w->unwind_exc, &detail::logical_exit_stop, w);
  // No unwind tables between here and the task entry: skip the cleanups.
  std::longjmp(w->anchor, 1);
}

}  // namespace threadcache
