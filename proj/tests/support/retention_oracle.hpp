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

// A brute-force scalar model of the retention policies, kept deliberately
// naive: a plain vector of (id, stamp) pairs in push order, scanned in full
// for every decision. The live engine (IdleStore + admit/reap) replays the
// same event scripts so the two can be compared event by event.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "threadcache/clock.hpp"
#include "threadcache/idle_store.hpp"
#include "threadcache/retention.hpp"

namespace tc_test {

using threadcache::Nanos;
using threadcache::RetentionConfig;
using threadcache::RetentionPolicy;

enum class EventKind { kExit, kSpawn, kTick };

struct Event {
  EventKind kind = EventKind::kTick;
  Nanos dt = 0;  // kTick only
};

// What one event did. Exits use a fresh worker id equal to the event index.
struct Outcome {
  std::vector<int> culled;  // sorted
  int refused = -1;         // exiting worker told to terminate
  int popped = -1;          // worker handed out by a spawn
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

inline std::string describe(const Outcome& o) {
  std::string s = "culled{";
  for (int id : o.culled) s += std::to_string(id) + ",";
  s += "} refused=" + std::to_string(o.refused) + " popped=" + std::to_string(o.popped);
  return s;
}

inline std::vector<Event> random_script(std::mt19937_64& rng, std::size_t n,
                                        const RetentionConfig& cfg) {
  const Nanos horizon = std::max<Nanos>(
      cfg.policy == RetentionPolicy::kIntegralBudget ? cfg.budget : cfg.max_idle_age, 1);
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<Nanos> step(0, horizon);
  std::vector<Event> script;
  script.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int k = kind(rng);
    if (k < 5) {
      script.push_back({EventKind::kExit, 0});
    } else if (k < 7) {
      script.push_back({EventKind::kSpawn, 0});
    } else {
      // Some ticks are zero-length so equal stamps occur.
      script.push_back({EventKind::kTick, k == 7 ? 0 : step(rng) / 3});
    }
  }
  return script;
}

class ScalarModel {
 public:
  explicit ScalarModel(RetentionConfig cfg) : cfg_(cfg) {}

  Outcome apply(const Event& e, int event_index) {
    Outcome o;
    switch (e.kind) {
      case EventKind::kExit:
        exit_worker(event_index, o);
        break;
      case EventKind::kSpawn:
        if (!idle_.empty()) {
          o.popped = idle_.back().id;
          idle_.pop_back();
        }
        break;
      case EventKind::kTick:
        now_ += e.dt;
        reap(o);
        break;
    }
    std::sort(o.culled.begin(), o.culled.end());
    return o;
  }

 private:
  struct Entry {
    int id;
    Nanos since;
  };

  void exit_worker(int id, Outcome& o) {
    if (cfg_.policy == RetentionPolicy::kClamp) {
      if (cfg_.clamp_size == 0) {
        o.refused = id;
        return;
      }
      if (idle_.size() >= cfg_.clamp_size) {
        if (cfg_.clamp_refuses_admission) {
          o.refused = id;
          return;
        }
        std::size_t overflow = idle_.size() + 1 - cfg_.clamp_size;
        for (std::size_t i = 0; i < overflow; ++i) o.culled.push_back(remove_oldest());
      }
    }
    idle_.push_back({id, now_});
  }

  // Oldest stamp; among equal stamps the one pushed first.
  int remove_oldest() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < idle_.size(); ++i) {
      if (idle_[i].since < idle_[best].since) best = i;
    }
    int id = idle_[best].id;
    idle_.erase(idle_.begin() + static_cast<std::ptrdiff_t>(best));
    return id;
  }

  Nanos integral() const {
    Nanos sum = 0;
    for (const Entry& e : idle_) sum += now_ - e.since;
    return sum;
  }

  void reap(Outcome& o) {
    if (cfg_.policy == RetentionPolicy::kAgeOut) {
      std::vector<Entry> keep;
      for (const Entry& e : idle_) {
        if (now_ - e.since > cfg_.max_idle_age) {
          o.culled.push_back(e.id);
        } else {
          keep.push_back(e);
        }
      }
      idle_ = keep;
    } else if (cfg_.policy == RetentionPolicy::kIntegralBudget) {
      while (!idle_.empty() && integral() > cfg_.budget) o.culled.push_back(remove_oldest());
    }
  }

  RetentionConfig cfg_;
  Nanos now_ = 0;
  std::vector<Entry> idle_;  // push order
};

// The real store and policy functions driven by the same script.
class LiveEngine {
 public:
  explicit LiveEngine(RetentionConfig cfg, std::size_t max_events)
      : cfg_(cfg), store_(clock_.source()), nodes_(max_events) {}

  Outcome apply(const Event& e, int event_index) {
    Outcome o;
    switch (e.kind) {
      case EventKind::kExit: {
        threadcache::AdmitDecision d = threadcache::admit(store_, cfg_);
        collect(d.evictions, o);
        if (d.verdict == threadcache::Verdict::kTerminate) {
          o.refused = event_index;
          break;
        }
        store_.push(nodes_[static_cast<std::size_t>(event_index)]);
        collect(threadcache::enforce_clamp(store_, cfg_), o);
        break;
      }
      case EventKind::kSpawn:
        if (threadcache::IdleNode* n = store_.pop()) o.popped = id_of(n);
        break;
      case EventKind::kTick:
        clock_.advance(e.dt);
        collect(threadcache::reap(store_, clock_.now(), cfg_), o);
        break;
    }
    std::sort(o.culled.begin(), o.culled.end());
    return o;
  }

  // Policy invariant after the last event; empty string when it holds.
  std::string check_invariant() const {
    const Nanos now = clock_.now();
    switch (cfg_.policy) {
      case RetentionPolicy::kClamp:
        if (store_.size() > cfg_.clamp_size) return "count above clamp";
        break;
      case RetentionPolicy::kAgeOut: {
        std::string bad;
        store_.for_each_locked([&](const threadcache::IdleNode& n) {
          if (now - n.idle_since.load() > cfg_.max_idle_age) bad = "idle age above max";
        });
        return bad;
      }
      case RetentionPolicy::kIntegralBudget:
        if (store_.integral(now) > cfg_.budget) return "integral above budget";
        break;
      case RetentionPolicy::kUnbounded:
        break;
    }
    return {};
  }

  const threadcache::IdleStore& store() const { return store_; }

 private:
  int id_of(const threadcache::IdleNode* n) const {
    return static_cast<int>(n - nodes_.data());
  }
  void collect(const std::vector<threadcache::IdleNode*>& v, Outcome& o) const {
    for (auto* n : v) o.culled.push_back(id_of(n));
  }

  RetentionConfig cfg_;
  threadcache::ManualClock clock_;
  threadcache::IdleStore store_;
  std::vector<threadcache::IdleNode> nodes_;
};

// Random configuration for one policy, with small sizes so culls are
// frequent.
inline RetentionConfig random_config(std::mt19937_64& rng, RetentionPolicy policy) {
  RetentionConfig cfg;
  cfg.policy = policy;
  cfg.clamp_size = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
  cfg.clamp_refuses_admission = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
  cfg.max_idle_age = std::uniform_int_distribution<Nanos>(1, 50)(rng) * threadcache::kNanosPerMilli;
  cfg.budget = std::uniform_int_distribution<Nanos>(0, 200)(rng) * threadcache::kNanosPerMilli;
  return cfg;
}

struct ScriptReport {
  bool match = true;
  std::string first_mismatch;
  std::size_t invariant_checks = 0;
  std::string invariant_violation;
};

// Replays `script` through both engines. Stops at the first divergence.
inline ScriptReport compare_script(const RetentionConfig& cfg, const std::vector<Event>& script) {
  ScriptReport r;
  ScalarModel model(cfg);
  LiveEngine live(cfg, script.size());
  for (std::size_t i = 0; i < script.size(); ++i) {
    const int idx = static_cast<int>(i);
    Outcome expected = model.apply(script[i], idx);
    Outcome got = live.apply(script[i], idx);
    if (!(expected == got)) {
      r.match = false;
      r.first_mismatch = "event " + std::to_string(i) + ": oracle " + describe(expected) +
                         " live " + describe(got);
      return r;
    }
    if (script[i].kind == EventKind::kTick || cfg.policy == RetentionPolicy::kClamp) {
      ++r.invariant_checks;
      if (std::string v = live.check_invariant(); !v.empty() && r.invariant_violation.empty()) {
        r.invariant_violation = "event " + std::to_string(i) + ": " + v;
      }
    }
  }
  return r;
}

}  // namespace tc_test
