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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "threadcache/clock.hpp"
#include "threadcache/idle_store.hpp"

namespace threadcache {

enum class RetentionPolicy {
  kUnbounded,       // keep every exiting worker
  kClamp,           // bound the number of idle workers
  kAgeOut,          // cull workers idle longer than max_idle_age
  kIntegralBudget,  // bound the sum of idle ages
};

std::string_view to_string(RetentionPolicy p) noexcept;
std::optional<RetentionPolicy> parse_policy(std::string_view name) noexcept;

struct RetentionConfig {
  RetentionPolicy policy = RetentionPolicy::kUnbounded;
  std::size_t clamp_size = 64;
  Nanos max_idle_age = kNanosPerSecond;
  // Thread-nanoseconds.
  Nanos budget = kNanosPerSecond;
  Nanos reap_period = 100 * kNanosPerMilli;
  // Idle time after which a worker's dead stack pages are handed back to
  // the OS. Disabled when empty.
  std::optional<Nanos> release_after;
  // Clamp variant that refuses the incoming worker instead of evicting the
  // coldest cached one.
  bool clamp_refuses_admission = false;

  // Throws std::invalid_argument on a violated field constraint.
  void validate() const;

  // True when the policy needs the periodic maintenance pass.
  bool needs_reaper() const noexcept {
    return policy == RetentionPolicy::kAgeOut ||
           policy == RetentionPolicy::kIntegralBudget ||
           release_after.has_value();
  }

  using EnvLookup = std::function<const char*(const char*)>;

  // Reads THREADCACHE_POLICY, THREADCACHE_CLAMP, THREADCACHE_AGE_MS,
  // THREADCACHE_BUDGET_MS, THREADCACHE_REAP_MS and THREADCACHE_RELEASE_MS.
  // Malformed values are reported on stderr and leave the default in place.
  static RetentionConfig from_env(const EnvLookup& lookup = {});
};

enum class Verdict { kCache, kTerminate };

struct AdmitDecision {
  Verdict verdict = Verdict::kCache;
  // Workers already removed from the store; the caller owns terminating
  // them.
  std::vector<IdleNode*> evictions;
};

// Decides the fate of a worker that just finished a task and is about to
// be pushed onto `store`. Clamp evicts the oldest cached workers so the
// incoming one fits.
AdmitDecision admit(IdleStore& store, const RetentionConfig& cfg);

// Post-push enforcement for Clamp: racing admits can each see room for one
// more, so the pusher re-trims after linking itself.
std::vector<IdleNode*> enforce_clamp(IdleStore& store,
                                     const RetentionConfig& cfg);

// Periodic maintenance. `now` is frozen for the whole pass. Returns the
// culled workers, oldest first, already unlinked.
std::vector<IdleNode*> reap(IdleStore& store, Nanos now,
                            const RetentionConfig& cfg);

struct StackExtent {
  std::uintptr_t low = 0;   // lowest usable address
  std::uintptr_t high = 0;  // one past the highest address
  bool valid() const noexcept { return low < high; }
};

enum class ReleaseResult { kAdvised, kNothingToRelease, kUnsupported, kFailed };

// Tells the OS that stack pages strictly below `watermark` are dead and may
// be replaced by demand-zero pages. Failures are logged, never fatal.
ReleaseResult release_stack_memory(StackExtent stack, std::uintptr_t watermark);

std::size_t page_size() noexcept;

}  // namespace threadcache
