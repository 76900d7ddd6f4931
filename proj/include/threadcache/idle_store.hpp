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
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include "threadcache/clock.hpp"

namespace threadcache {

// Intrusive link embedded in every cacheable worker. A node is owned by
// whoever holds it outside the store; while linked, only the store's
// removal side may touch `next`.
struct IdleNode {
  std::atomic<IdleNode*> next{nullptr};
  std::atomic<Nanos> idle_since{0};
};

// LIFO stack of idle workers, "half lock-free": push is a CAS loop that
// never blocks, while every removal (pop, cull) is serialized under one
// mutex. Serializing removals rules out A-B-A on the head: a linked node
// cannot be unlinked and relinked by anyone but the lock holder.
class IdleStore {
 public:
  explicit IdleStore(ClockSource clock = {}) : clock_(clock) {}

  IdleStore(const IdleStore&) = delete;
  IdleStore& operator=(const IdleStore&) = delete;

  // Links `node` at the top and stamps its idle_since. The stamp is taken
  // after each head read so a successful CAS never places a node above a
  // younger one pushed earlier.
  void push(IdleNode& node) noexcept;

  // Removes the most recently pushed node, or returns nullptr.
  IdleNode* pop() noexcept;

  // Removes up to `k` nodes, oldest idle_since first, returned in removal
  // order.
  std::vector<IdleNode*> cull_oldest(std::size_t k);

  // Removes every node idle strictly longer than `max_age` at `now`.
  std::vector<IdleNode*> cull_older_than(Nanos now, Nanos max_age);

  // Sum over linked nodes of (now - idle_since), in nanoseconds; negative
  // ages from stamps taken after `now` count as zero.
  Nanos integral(Nanos now) const;

  // Runs `fn(node)` for each linked node, newest first, with removals
  // blocked. `fn` must not push to or pop from this store.
  template <typename Fn>
  void for_each_locked(Fn&& fn) const {
    std::lock_guard<std::mutex> lock(pop_lock_);
    for (IdleNode* n = top_.load(std::memory_order_acquire); n != nullptr;
         n = n->next.load(std::memory_order_relaxed)) {
      fn(*n);
    }
  }

  std::size_t size() const noexcept {
    return count_.load(std::memory_order_relaxed);
  }

  // Called between reading the head and the CAS that publishes the new
  // one, so tests can stall an operation at its most delicate point. Set
  // before the store is shared.
  using Hook = void (*)(void* ctx);
  void set_test_hooks(Hook on_push, Hook on_pop, void* ctx) noexcept {
    push_hook_ = on_push;
    pop_hook_ = on_pop;
    hook_ctx_ = ctx;
  }
  bool empty() const noexcept { return size() == 0; }

  Nanos now() const noexcept { return clock_.now(); }
  ClockSource clock() const noexcept { return clock_; }

 private:
  // Caller holds pop_lock_. `node` must be linked.
  void unlink_locked(IdleNode& node) noexcept;
  std::vector<IdleNode*> snapshot_locked() const;

  ClockSource clock_;
  alignas(64) std::atomic<IdleNode*> top_{nullptr};
  alignas(64) std::atomic<std::size_t> count_{0};
  mutable std::mutex pop_lock_;
  Hook push_hook_ = nullptr;
  Hook pop_hook_ = nullptr;
  void* hook_ctx_ = nullptr;
};

// A set of IdleStores, one per shard. Pushes go to the shard of the CPU the
// pusher runs on; pops prefer that shard and then scan the others. With one
// shard this is exactly a single IdleStore.
class ShardedIdleStore {
 public:
  explicit ShardedIdleStore(std::size_t shards = 1, ClockSource clock = {});

  void push(IdleNode& node) noexcept { shard_for_current_cpu().push(node); }
  IdleNode* pop() noexcept;

  std::size_t shard_count() const noexcept { return shards_.size(); }
  IdleStore& shard(std::size_t i) noexcept { return *shards_[i]; }
  const IdleStore& shard(std::size_t i) const noexcept { return *shards_[i]; }
  IdleStore& shard_for_current_cpu() noexcept {
    return *shards_[current_shard()];
  }

  std::size_t size() const noexcept;

 private:
  std::size_t current_shard() const noexcept;

  std::vector<std::unique_ptr<IdleStore>> shards_;
};

}  // namespace threadcache
