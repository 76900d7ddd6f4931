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

// Thread-creation benchmarks: the spawn/join loop, a deferred-async variant
// and a recursive fork-join sort, each run with the cache on ("cached") or
// off ("default").

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "threadcache/retention.hpp"
#include "threadcache/runtime.hpp"

namespace threadcache::bench {

enum class Workload { kSpawn, kDeferred, kForkJoin };
enum class Mode { kDefault, kCached };

std::string_view to_string(Workload w) noexcept;
std::string_view to_string(Mode m) noexcept;
std::optional<Workload> parse_workload(std::string_view s) noexcept;
std::optional<Mode> parse_mode(std::string_view s) noexcept;
// "threads/s" for the spawn-style workloads, "ms" for fork-join.
std::string_view unit_of(Workload w) noexcept;

struct BenchConfig {
  Workload workload = Workload::kSpawn;
  unsigned creators = 32;
  double duration_s = 10.0;
  unsigned runs = 7;
  std::vector<Mode> modes{Mode::kDefault, Mode::kCached};
  // Creator counts to sweep; empty means just `creators`.
  std::vector<unsigned> sweep;
  std::uint64_t seed = 1;
  // Busy work in each child, in nanoseconds.
  std::uint64_t spin_ns = 0;
  // Fork-join sort size and the subproblem size below which it stops
  // spawning.
  std::size_t sort_keys = 1'000'000;
  std::size_t cutoff = 8192;
  // Retention for cached runs.
  RetentionConfig retention;
  // Retries for a run that lost a spawn to resource exhaustion.
  unsigned max_retries = 3;

  // Throws std::invalid_argument.
  void validate() const;
};

struct BenchResult {
  Workload workload = Workload::kSpawn;
  Mode mode = Mode::kCached;
  unsigned creators = 0;
  unsigned run_index = 0;
  // threads/s (spawn, deferred) or elapsed milliseconds (fork-join).
  double value = 0.0;
  // Counter deltas over the timed interval.
  CacheStats stats;
  // Whole-run counters read at quiescence, after every creator finished.
  CacheStats totals;
  // physical_creates deltas over each half of the timed interval.
  std::uint64_t creates_first_half = 0;
  std::uint64_t creates_second_half = 0;
  std::uint64_t completed = 0;
  double elapsed_s = 0.0;
  // False when a correctness gate failed: unsorted output, or cache hits
  // in default mode.
  bool gates_ok = true;
  std::string failure;
};

using Log = std::function<void(std::string_view)>;

BenchResult run_spawn_bench(const BenchConfig& cfg, Mode mode, unsigned creators,
                            unsigned run_index = 0, const Log& log = {});
BenchResult run_deferred_bench(const BenchConfig& cfg, Mode mode, unsigned creators,
                               unsigned run_index = 0, const Log& log = {});
BenchResult run_forkjoin_bench(const BenchConfig& cfg, Mode mode,
                               unsigned run_index = 0, const Log& log = {});
BenchResult run_once(const BenchConfig& cfg, Mode mode, unsigned creators,
                     unsigned run_index = 0, const Log& log = {});

// Runtime configuration a benchmark mode maps to.
RuntimeConfig runtime_config_for(Mode mode, const RetentionConfig& retention);

// Middle order statistic. Throws std::invalid_argument for an empty or
// even-sized sample.
double median_of(std::span<const double> values);

struct CsvRow {
  std::string workload;
  std::string mode;
  unsigned creators = 0;
  // Run index, or "median".
  std::string run;
  double value = 0.0;
  std::string unit;

  friend bool operator==(const CsvRow&, const CsvRow&) = default;
};

inline constexpr std::string_view kCsvHeader = "workload,mode,creators,run,value,unit";

void write_csv_header(std::ostream& out);
// Writes and flushes one row.
void write_csv_row(std::ostream& out, const CsvRow& row);
// Throws std::runtime_error on a malformed header or row.
std::vector<CsvRow> parse_csv(std::istream& in);

struct SweepPoint {
  Mode mode = Mode::kCached;
  unsigned creators = 0;
  std::vector<BenchResult> runs;
  double median = 0.0;
};

// Runs every (creators, mode) point `runs` times. Rows go to `csv` as soon
// as each run finishes.
std::vector<SweepPoint> run_sweep(const BenchConfig& cfg, std::ostream* csv,
                                  const Log& log = {});

// Deferred evaluation in the style of a lazily launched async: no thread
// exists until get() is first called.
class Deferred {
 public:
  Deferred(Runtime& rt, std::function<std::uintptr_t()> fn)
      : rt_(&rt), fn_(std::move(fn)) {}

  std::uintptr_t get();
  bool materialized() const noexcept { return result_.has_value(); }

 private:
  Runtime* rt_;
  std::function<std::uintptr_t()> fn_;
  std::optional<std::uintptr_t> result_;
};

// Sorts `keys` by recursive halving, spawning one logical thread per split
// while a half exceeds `cutoff` keys.
void fork_join_sort(Runtime& rt, std::span<std::uint64_t> keys, std::size_t cutoff);

}  // namespace threadcache::bench
