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

#include "threadcache/retention.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#if defined(__linux__)
#include <sys/mman.h>
#include <unistd.h>
#endif

namespace threadcache {

std::string_view to_string(RetentionPolicy p) noexcept {
  switch (p) {
    case RetentionPolicy::kUnbounded: return "unbounded";
    case RetentionPolicy::kClamp: return "clamp";
    case RetentionPolicy::kAgeOut: return "age";
    case RetentionPolicy::kIntegralBudget: return "integral";
  }
  return "?";
}

std::optional<RetentionPolicy> parse_policy(std::string_view name) noexcept {
  if (name == "unbounded") return RetentionPolicy::kUnbounded;
  if (name == "clamp") return RetentionPolicy::kClamp;
  if (name == "age") return RetentionPolicy::kAgeOut;
  if (name == "integral") return RetentionPolicy::kIntegralBudget;
  return std::nullopt;
}

void RetentionConfig::validate() const {
  if (max_idle_age <= 0) throw std::invalid_argument("max_idle_age must be > 0");
  if (budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (reap_period <= 0) throw std::invalid_argument("reap_period must be > 0");
  if (release_after && *release_after < 0) {
    throw std::invalid_argument("release_after must be >= 0");
  }
}

namespace {

std::optional<std::int64_t> parse_count(const char* name, const char* text) {
  std::int64_t value = 0;
  const char* end = text + std::strlen(text);
  auto [ptr, ec] = std::from_chars(text, end, value);
  if (ec != std::errc{} || ptr != end || value < 0) {
    std::fprintf(stderr, "threadcache: ignoring malformed %s=%s\n", name, text);
    return std::nullopt;
  }
  return value;
}

}  // namespace

RetentionConfig RetentionConfig::from_env(const EnvLookup& lookup) {
  auto get = [&](const char* name) -> const char* {
    return lookup ? lookup(name) : std::getenv(name);
  };
  RetentionConfig cfg;
  if (const char* v = get("THREADCACHE_POLICY")) {
    if (auto p = parse_policy(v)) {
      cfg.policy = *p;
    } else {
      std::fprintf(stderr, "threadcache: unknown THREADCACHE_POLICY=%s\n", v);
    }
  }
  if (const char* v = get("THREADCACHE_CLAMP")) {
    if (auto n = parse_count("THREADCACHE_CLAMP", v)) {
      cfg.clamp_size = static_cast<std::size_t>(*n);
    }
  }
  if (const char* v = get("THREADCACHE_AGE_MS")) {
    if (auto n = parse_count("THREADCACHE_AGE_MS", v); n && *n > 0) {
      cfg.max_idle_age = *n * kNanosPerMilli;
    }
  }
  if (const char* v = get("THREADCACHE_BUDGET_MS")) {
    if (auto n = parse_count("THREADCACHE_BUDGET_MS", v)) {
      cfg.budget = *n * kNanosPerMilli;
    }
  }
  if (const char* v = get("THREADCACHE_REAP_MS")) {
    if (auto n = parse_count("THREADCACHE_REAP_MS", v); n && *n > 0) {
      cfg.reap_period = *n * kNanosPerMilli;
    }
  }
  if (const char* v = get("THREADCACHE_RELEASE_MS")) {
    if (auto n = parse_count("THREADCACHE_RELEASE_MS", v)) {
      cfg.release_after = *n * kNanosPerMilli;
    }
  }
  return cfg;
}

AdmitDecision admit(IdleStore& store, const RetentionConfig& cfg) {
  AdmitDecision d;
  if (cfg.policy != RetentionPolicy::kClamp) return d;
  if (cfg.clamp_size == 0) {
    d.verdict = Verdict::kTerminate;
    return d;
  }
  std::size_t count = store.size();
  if (count < cfg.clamp_size) return d;
  if (cfg.clamp_refuses_admission) {
    d.verdict = Verdict::kTerminate;
    return d;
  }
  d.evictions = store.cull_oldest(count + 1 - cfg.clamp_size);
  return d;
}

std::vector<IdleNode*> enforce_clamp(IdleStore& store,
                                     const RetentionConfig& cfg) {
  if (cfg.policy != RetentionPolicy::kClamp) return {};
  std::size_t count = store.size();
  if (count <= cfg.clamp_size) return {};
  return store.cull_oldest(count - cfg.clamp_size);
}

std::vector<IdleNode*> reap(IdleStore& store, Nanos now,
                            const RetentionConfig& cfg) {
  switch (cfg.policy) {
    case RetentionPolicy::kAgeOut:
      return store.cull_older_than(now, cfg.max_idle_age);
    case RetentionPolicy::kIntegralBudget: {
      // Each cull removes the largest single contribution, so the loop ends
      // at the latest when the store is empty.
      std::vector<IdleNode*> culled;
      while (store.integral(now) > cfg.budget) {
        auto one = store.cull_oldest(1);
        if (one.empty()) break;
        culled.push_back(one.front());
      }
      return culled;
    }
    case RetentionPolicy::kUnbounded:
    case RetentionPolicy::kClamp:
      break;
  }
  return {};
}

std::size_t page_size() noexcept {
#if defined(__linux__)
  static const std::size_t size = static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
  return size;
#else
  return 4096;
#endif
}

ReleaseResult release_stack_memory(StackExtent stack, std::uintptr_t watermark) {
#if defined(__linux__) && defined(MADV_DONTNEED)
  if (!stack.valid()) return ReleaseResult::kNothingToRelease;
  const std::uintptr_t page = page_size();
  std::uintptr_t begin = (stack.low + page - 1) & ~(page - 1);
  std::uintptr_t end = std::min(watermark, stack.high) & ~(page - 1);
  if (end <= begin) return ReleaseResult::kNothingToRelease;
  if (madvise(reinterpret_cast<void*>(begin), end - begin, MADV_DONTNEED) != 0) {
    std::fprintf(stderr, "threadcache: madvise(%p, %zu) failed: %s\n",
                 reinterpret_cast<void*>(begin), static_cast<std::size_t>(end - begin),
                 std::strerror(errno));
    return ReleaseResult::kFailed;
  }
  return ReleaseResult::kAdvised;
#else
  (void)stack;
  (void)watermark;
  return ReleaseResult::kUnsupported;
#endif
}

}  // namespace threadcache
