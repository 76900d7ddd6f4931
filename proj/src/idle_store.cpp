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

#include "threadcache/idle_store.hpp"

#include <algorithm>
#include <cassert>

#if defined(__linux__)
#include <sched.h>
#endif

namespace threadcache {

void IdleStore::push(IdleNode& node) noexcept {
  // Counted before the node becomes visible so a racing pop can never
  // drive the gauge below the number of linked nodes.
  count_.fetch_add(1, std::memory_order_relaxed);
  IdleNode* head = top_.load(std::memory_order_relaxed);
  for (;;) {
    node.next.store(head, std::memory_order_relaxed);
    node.idle_since.store(clock_.now(), std::memory_order_relaxed);
    if (push_hook_) push_hook_(hook_ctx_);
    if (top_.compare_exchange_weak(head, &node, std::memory_order_release,
                                   std::memory_order_relaxed)) {
      return;
    }
  }
}

IdleNode* IdleStore::pop() noexcept {
  if (top_.load(std::memory_order_relaxed) == nullptr) return nullptr;
  std::lock_guard<std::mutex> lock(pop_lock_);
  IdleNode* head = top_.load(std::memory_order_acquire);
  while (head != nullptr) {
    // Stable: only the lock holder unlinks, so head stays linked and its
    // successor cannot change underneath us.
    IdleNode* next = head->next.load(std::memory_order_relaxed);
    if (pop_hook_) pop_hook_(hook_ctx_);
    if (top_.compare_exchange_weak(head, next, std::memory_order_acquire,
                                   std::memory_order_acquire)) {
      count_.fetch_sub(1, std::memory_order_relaxed);
      head->next.store(nullptr, std::memory_order_relaxed);
      return head;
    }
  }
  return nullptr;
}

void IdleStore::unlink_locked(IdleNode& node) noexcept {
  IdleNode* successor = node.next.load(std::memory_order_relaxed);
  IdleNode* head = top_.load(std::memory_order_acquire);
  if (head == &node &&
      top_.compare_exchange_strong(head, successor, std::memory_order_acquire,
                                   std::memory_order_acquire)) {
    node.next.store(nullptr, std::memory_order_relaxed);
    count_.fetch_sub(1, std::memory_order_relaxed);
    return;
  }
  // Concurrent pushes only prepend, so `node` is still reachable from the
  // current head and has a predecessor.
  for (IdleNode* p = top_.load(std::memory_order_acquire); p != nullptr;
       p = p->next.load(std::memory_order_relaxed)) {
    if (p->next.load(std::memory_order_relaxed) == &node) {
      p->next.store(successor, std::memory_order_relaxed);
      node.next.store(nullptr, std::memory_order_relaxed);
      count_.fetch_sub(1, std::memory_order_relaxed);
      return;
    }
  }
  assert(false && "unlink of a node that is not linked");
}

std::vector<IdleNode*> IdleStore::snapshot_locked() const {
  std::vector<IdleNode*> nodes;
  nodes.reserve(count_.load(std::memory_order_relaxed));
  for (IdleNode* n = top_.load(std::memory_order_acquire); n != nullptr;
       n = n->next.load(std::memory_order_relaxed)) {
    nodes.push_back(n);
  }
  return nodes;
}

namespace {

// Orders a newest-first snapshot oldest-first. Equal stamps fall back to
// list position: deeper means pushed earlier.
std::vector<IdleNode*> oldest_first(std::vector<IdleNode*> newest_first) {
  std::reverse(newest_first.begin(), newest_first.end());
  std::stable_sort(newest_first.begin(), newest_first.end(),
                   [](const IdleNode* a, const IdleNode* b) {
                     return a->idle_since.load(std::memory_order_relaxed) <
                            b->idle_since.load(std::memory_order_relaxed);
                   });
  return newest_first;
}

}  // namespace

std::vector<IdleNode*> IdleStore::cull_oldest(std::size_t k) {
  std::lock_guard<std::mutex> lock(pop_lock_);
  if (k == 0) return {};
  std::vector<IdleNode*> victims = oldest_first(snapshot_locked());
  if (victims.size() > k) victims.resize(k);
  for (IdleNode* n : victims) unlink_locked(*n);
  return victims;
}

std::vector<IdleNode*> IdleStore::cull_older_than(Nanos now, Nanos max_age) {
  std::lock_guard<std::mutex> lock(pop_lock_);
  std::vector<IdleNode*> victims = oldest_first(snapshot_locked());
  auto young = std::find_if(victims.begin(), victims.end(), [&](IdleNode* n) {
    return now - n->idle_since.load(std::memory_order_relaxed) <= max_age;
  });
  victims.erase(young, victims.end());
  for (IdleNode* n : victims) unlink_locked(*n);
  return victims;
}

Nanos IdleStore::integral(Nanos now) const {
  Nanos sum = 0;
  for_each_locked([&](const IdleNode& n) {
    sum += std::max<Nanos>(0, now - n.idle_since.load(std::memory_order_relaxed));
  });
  return sum;
}

ShardedIdleStore::ShardedIdleStore(std::size_t shards, ClockSource clock) {
  shards_.reserve(std::max<std::size_t>(shards, 1));
  for (std::size_t i = 0; i < std::max<std::size_t>(shards, 1); ++i) {
    shards_.push_back(std::make_unique<IdleStore>(clock));
  }
}

std::size_t ShardedIdleStore::current_shard() const noexcept {
  if (shards_.size() == 1) return 0;
#if defined(__linux__)
  int cpu = sched_getcpu();
  if (cpu >= 0) return static_cast<std::size_t>(cpu) % shards_.size();
#endif
  return 0;
}

IdleNode* ShardedIdleStore::pop() noexcept {
  std::size_t home = current_shard();
  if (IdleNode* n = shards_[home]->pop()) return n;
  for (std::size_t i = 1; i < shards_.size(); ++i) {
    IdleStore& s = *shards_[(home + i) % shards_.size()];
    if (s.empty()) continue;
    if (IdleNode* n = s.pop()) return n;
  }
  return nullptr;
}

std::size_t ShardedIdleStore::size() const noexcept {
  std::size_t total = 0;
  for (const auto& s : shards_) total += s->size();
  return total;
}

}  // namespace threadcache
