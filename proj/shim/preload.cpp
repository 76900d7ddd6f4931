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

// LD_PRELOAD interposer for pthread_create, pthread_exit, pthread_join and
// pthread_detach. Default-attribute creations become logical threads of a
// private Runtime; everything else goes to the next definition in link
// order. Handles of logical threads are odd, so they can never collide with
// glibc handles, which are descriptor addresses.

#include <dlfcn.h>
#include <pthread.h>
#include <sched.h>
#include <unistd.h>
#include <sys/syscall.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <unordered_map>

#include "threadcache/preload.h"
#include "threadcache/runtime.hpp"

#define TC_EXPORT extern "C" __attribute__((visibility("default")))

namespace {

using threadcache::ExitStatus;
using threadcache::JoinHandle;
using threadcache::PlatformThreads;
using threadcache::Runtime;
using threadcache::RuntimeConfig;

struct RealSymbols {
  PlatformThreads::CreateFn create_fn;
  PlatformThreads::ExitFn exit_fn;
  PlatformThreads::JoinFn join_fn;
  PlatformThreads::DetachFn detach_fn;
};

template <typename Fn>
Fn next_symbol(const char* name) {
  void* p = dlsym(RTLD_NEXT, name);
  if (p == nullptr) {
    std::fprintf(stderr, "threadcache: cannot resolve %s: %s\n", name, dlerror());
    std::abort();
  }
  return reinterpret_cast<Fn>(p);
}

const RealSymbols& real() {
  static const RealSymbols syms{
      next_symbol<PlatformThreads::CreateFn>("pthread_create"),
      next_symbol<PlatformThreads::ExitFn>("pthread_exit"),
      next_symbol<PlatformThreads::JoinFn>("pthread_join"),
      next_symbol<PlatformThreads::DetachFn>("pthread_detach"),
  };
  return syms;
}

struct Shim {
  explicit Shim(RuntimeConfig cfg) : rt(std::move(cfg)) {}

  Runtime rt;
  std::mutex mu;
  // Logical id -> handle, for every logical thread that may still be
  // joined or detached through its pthread_t.
  std::unordered_map<std::uint64_t, JoinHandle> handles;
};

constinit std::atomic<Shim*> g_shim{nullptr};
constinit std::atomic<int> g_disabled{-1};
constinit std::atomic<std::uint64_t> g_forwarded{0};
constinit std::mutex g_init_mu;

// Set while the shim itself is inside runtime code on this thread.
constinit thread_local bool tls_in_shim __attribute__((tls_model("initial-exec"))) = false;

struct ShimScope {
  ShimScope() noexcept { tls_in_shim = true; }
  ~ShimScope() { tls_in_shim = false; }
};

void erase_detached(std::uint64_t logical_id, void*) {
  Shim* s = g_shim.load(std::memory_order_acquire);
  std::lock_guard<std::mutex> lock(s->mu);
  s->handles.erase(logical_id);
}

bool disabled() {
  int d = g_disabled.load(std::memory_order_acquire);
  if (d < 0) {
    const char* v = std::getenv("THREADCACHE");
    d = (v != nullptr && std::strcmp(v, "0") == 0) ? 1 : 0;
    g_disabled.store(d, std::memory_order_release);
  }
  return d == 1;
}

// nullptr when caching is off.
Shim* shim() {
  if (Shim* s = g_shim.load(std::memory_order_acquire)) return s;
  if (disabled()) return nullptr;
  std::lock_guard<std::mutex> lock(g_init_mu);
  if (Shim* s = g_shim.load(std::memory_order_relaxed)) return s;
  ShimScope scope;
  const RealSymbols& r = real();
  RuntimeConfig cfg = RuntimeConfig::from_env();
  cfg.platform = PlatformThreads{r.create_fn, r.exit_fn, r.join_fn, r.detach_fn};
  cfg.on_detached_complete = &erase_detached;
  // Never destroyed: logical threads may outlive static destructors.
  Shim* s = new Shim(std::move(cfg));
  g_shim.store(s, std::memory_order_release);
  return s;
}

constexpr bool is_logical(pthread_t th) noexcept {
  return (static_cast<std::uintptr_t>(th) & 1u) != 0;
}
constexpr pthread_t encode(std::uint64_t id) noexcept {
  return static_cast<pthread_t>((id << 1) | 1u);
}
constexpr std::uint64_t decode(pthread_t th) noexcept {
  return static_cast<std::uint64_t>(th) >> 1;
}

bool same_default(const pthread_attr_t* a, const pthread_attr_t* d) {
  int x = 0, y = 0;
  if (pthread_attr_getdetachstate(a, &x) != 0 || x != PTHREAD_CREATE_JOINABLE) return false;
  if (pthread_attr_getinheritsched(a, &x) != 0 || pthread_attr_getinheritsched(d, &y) != 0 ||
      x != y) {
    return false;
  }
  if (pthread_attr_getschedpolicy(a, &x) != 0 || pthread_attr_getschedpolicy(d, &y) != 0 ||
      x != y) {
    return false;
  }
  if (pthread_attr_getscope(a, &x) != 0 || pthread_attr_getscope(d, &y) != 0 || x != y) {
    return false;
  }
  sched_param pa{}, pd{};
  if (pthread_attr_getschedparam(a, &pa) != 0 || pthread_attr_getschedparam(d, &pd) != 0 ||
      pa.sched_priority != pd.sched_priority) {
    return false;
  }
  std::size_t sa = 0, sd = 0;
  if (pthread_attr_getstacksize(a, &sa) != 0 || pthread_attr_getstacksize(d, &sd) != 0 ||
      sa != sd) {
    return false;
  }
  if (pthread_attr_getguardsize(a, &sa) != 0 || pthread_attr_getguardsize(d, &sd) != 0 ||
      sa != sd) {
    return false;
  }
  void* stack_a = nullptr;
  void* stack_d = nullptr;
  if (pthread_attr_getstack(a, &stack_a, &sa) != 0 ||
      pthread_attr_getstack(d, &stack_d, &sd) != 0 || stack_a != stack_d) {
    return false;
  }
#if defined(__GLIBC__)
  cpu_set_t ca, cd;
  if (pthread_attr_getaffinity_np(a, sizeof ca, &ca) != 0 ||
      pthread_attr_getaffinity_np(d, sizeof cd, &cd) != 0 || !CPU_EQUAL(&ca, &cd)) {
    return false;
  }
#if defined(PTHREAD_ATTR_NO_SIGMASK_NP)
  sigset_t ss;
  if (pthread_attr_getsigmask_np(a, &ss) != PTHREAD_ATTR_NO_SIGMASK_NP) return false;
#endif
#endif
  return true;
}

bool cache_eligible(const pthread_attr_t* attr) {
  if (attr == nullptr) return true;
  pthread_attr_t def;
  if (pthread_attr_init(&def) != 0) return false;
  bool ok = same_default(attr, &def);
  pthread_attr_destroy(&def);
  return ok;
}

int to_errno(std::errc ec) noexcept {
  // The platform reports every kind of exhaustion as EAGAIN.
  if (ec == std::errc::not_enough_memory) return EAGAIN;
  return static_cast<int>(ec);
}

bool is_main_thread() noexcept {
  return static_cast<pid_t>(syscall(SYS_gettid)) == getpid();
}

}  // namespace

TC_EXPORT int pthread_create(pthread_t* thread, const pthread_attr_t* attr,
                             void* (*start)(void*), void* arg) {
  const RealSymbols& r = real();
  Shim* s = tls_in_shim ? nullptr : shim();
  if (s == nullptr || !cache_eligible(attr)) {
    g_forwarded.fetch_add(1, std::memory_order_relaxed);
    return r.create_fn(thread, attr, start, arg);
  }
  ShimScope scope;
  JoinHandle h;
  if (std::errc ec = s->rt.try_spawn(start, arg, h); ec != std::errc{}) {
    return to_errno(ec);
  }
  const std::uint64_t id = h.logical_id();
  {
    std::lock_guard<std::mutex> lock(s->mu);
    // A child that detached itself and already finished has no one left to
    // erase its entry.
    if (!(h.detached() && h.finished())) s->handles.emplace(id, std::move(h));
  }
  *thread = encode(id);
  return 0;
}

TC_EXPORT int pthread_join(pthread_t th, void** retval) {
  if (!is_logical(th)) {
    // Workers are detached physical threads; the real join would say EINVAL.
    if (Runtime::current_logical_id() != 0 && pthread_equal(th, pthread_self())) return EDEADLK;
    return real().join_fn(th, retval);
  }
  Shim* s = g_shim.load(std::memory_order_acquire);
  if (s == nullptr) return ESRCH;
  const std::uint64_t id = decode(th);
  JoinHandle h;
  {
    std::lock_guard<std::mutex> lock(s->mu);
    auto it = s->handles.find(id);
    if (it == s->handles.end()) return ESRCH;
    if (it->second.detached()) return EINVAL;
    if (Runtime::current_logical_id() == id) return EDEADLK;
    h = std::move(it->second);
    s->handles.erase(it);
  }
  ExitStatus st;
  if (s->rt.try_join(h, st) != std::errc{}) return EINVAL;
  if (retval != nullptr) *retval = st.poisoned ? PTHREAD_CANCELED : st.as_pointer();
  return 0;
}

TC_EXPORT int pthread_detach(pthread_t th) {
  if (!is_logical(th)) {
    // pthread_detach(pthread_self()) from a logical thread names its worker.
    if (Runtime::current_logical_id() != 0 && pthread_equal(th, pthread_self())) {
      return Runtime::detach_current() == std::errc{} ? 0 : EINVAL;
    }
    return real().detach_fn(th);
  }
  Shim* s = g_shim.load(std::memory_order_acquire);
  if (s == nullptr) return ESRCH;
  std::lock_guard<std::mutex> lock(s->mu);
  auto it = s->handles.find(decode(th));
  if (it == s->handles.end()) return ESRCH;
  if (s->rt.try_detach(it->second) != std::errc{}) return EINVAL;
  // Still running: the worker erases the entry when it completes.
  if (it->second.finished()) s->handles.erase(it);
  return 0;
}

TC_EXPORT void pthread_exit(void* retval) {
  if (threadcache::in_logical_thread()) threadcache::logical_exit(retval);
  // After main leaves, the process lives exactly as long as its threads;
  // parked workers must not keep it alive.
  if (Shim* s = g_shim.load(std::memory_order_acquire); s != nullptr && is_main_thread()) {
    s->rt.drain();
  }
  real().exit_fn(retval);
  __builtin_unreachable();
}

TC_EXPORT int threadcache_preload_stats(threadcache_preload_stats_t* out) {
  if (out == nullptr) return -1;
  *out = threadcache_preload_stats_t{};
  out->forwarded_creates = g_forwarded.load(std::memory_order_relaxed);
  out->disabled = disabled() ? 1 : 0;
  if (Shim* s = g_shim.load(std::memory_order_acquire)) {
    threadcache::CacheStats st = s->rt.stats();
    out->spawns_total = st.spawns_total;
    out->cache_hits = st.cache_hits;
    out->physical_creates = st.physical_creates;
    out->physical_culls = st.physical_culls;
    out->current_idle = st.current_idle;
    out->peak_idle = st.peak_idle;
  }
  return 0;
}
