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

#include "threadcache/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace threadcache::bench {

std::string_view to_string(Workload w) noexcept {
  switch (w) {
    case Workload::kSpawn: return "spawn";
    case Workload::kDeferred: return "deferred";
    case Workload::kForkJoin: return "forkjoin";
  }
  return "?";
}

std::string_view to_string(Mode m) noexcept {
  return m == Mode::kDefault ? "default" : "cached";
}

std::optional<Workload> parse_workload(std::string_view s) noexcept {
  if (s == "spawn") return Workload::kSpawn;
  if (s == "deferred") return Workload::kDeferred;
  if (s == "forkjoin") return Workload::kForkJoin;
  return std::nullopt;
}

std::optional<Mode> parse_mode(std::string_view s) noexcept {
  if (s == "default") return Mode::kDefault;
  if (s == "cached") return Mode::kCached;
  return std::nullopt;
}

std::string_view unit_of(Workload w) noexcept {
  return w == Workload::kForkJoin ? "ms" : "threads/s";
}

void BenchConfig::validate() const {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be > 0");
  if (runs == 0 || runs % 2 == 0) throw std::invalid_argument("runs must be odd");
  if (creators == 0) throw std::invalid_argument("creators must be >= 1");
  if (modes.empty()) throw std::invalid_argument("at least one mode is required");
  for (unsigned c : sweep) {
    if (c == 0) throw std::invalid_argument("sweep entries must be >= 1");
  }
  if (cutoff == 0) throw std::invalid_argument("cutoff must be >= 1");
  retention.validate();
}

RuntimeConfig runtime_config_for(Mode mode, const RetentionConfig& retention) {
  RuntimeConfig c;
  c.caching = mode == Mode::kCached;
  c.retention = retention;
  return c;
}

namespace {

void busy_wait(std::uint64_t ns) {
  if (ns == 0) return;
  const Nanos start = monotonic_now();
  while (static_cast<std::uint64_t>(monotonic_now() - start) < ns) {
  }
}

void* child_entry(void* arg) {
  busy_wait(reinterpret_cast<std::uintptr_t>(arg));
  return nullptr;
}

void emit(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

struct alignas(64) CreatorCount {
  std::uint64_t completed = 0;
};

// Runs `creators` independent loops of `cycle` for the configured interval
// and reports completed cycles per second. `cycle` returns false when a
// spawn was refused.
template <typename Cycle>
BenchResult timed_creator_loop(const BenchConfig& cfg, Workload workload, Mode mode,
                               unsigned creators, unsigned run_index, const Log& log,
                               Cycle cycle) {
  using clock = std::chrono::steady_clock;
  const auto interval = std::chrono::duration<double>(cfg.duration_s);
  const auto warmup = std::max<clock::duration>(
      std::chrono::duration_cast<clock::duration>(interval * 0.01),
      std::chrono::milliseconds(10));

  for (unsigned attempt = 0;; ++attempt) {
    Runtime rt(runtime_config_for(mode, cfg.retention));
    std::atomic<unsigned> ready{0};
    std::atomic<bool> measuring{false};
    std::atomic<bool> stop{false};
    std::atomic<bool> failed{false};
    std::vector<CreatorCount> counts(creators);
    std::vector<JoinHandle> handles;
    handles.reserve(creators);

    for (unsigned i = 0; i < creators; ++i) {
      handles.push_back(rt.spawn([&, i] {
        ready.fetch_add(1, std::memory_order_relaxed);
        std::uint64_t done = 0;
        while (!stop.load(std::memory_order_relaxed)) {
          if (!cycle(rt)) {
            failed.store(true, std::memory_order_relaxed);
            break;
          }
          if (measuring.load(std::memory_order_relaxed)) ++done;
        }
        counts[i].completed = done;
      }));
    }
    while (ready.load(std::memory_order_relaxed) < creators) std::this_thread::yield();
    std::this_thread::sleep_for(warmup);

    const CacheStats before = rt.stats();
    const auto t0 = clock::now();
    measuring.store(true, std::memory_order_relaxed);
    std::this_thread::sleep_until(t0 + std::chrono::duration_cast<clock::duration>(interval / 2));
    const CacheStats mid = rt.stats();
    std::this_thread::sleep_until(t0 + std::chrono::duration_cast<clock::duration>(interval));
    measuring.store(false, std::memory_order_relaxed);
    const auto t1 = clock::now();
    const CacheStats after = rt.stats();
    stop.store(true, std::memory_order_relaxed);
    for (auto& h : handles) rt.join(h);
    rt.wait_quiescent();
    const CacheStats totals = rt.stats();

    if (failed.load() && attempt < cfg.max_retries) {
      emit(log, "run " + std::to_string(run_index) + " (" + std::string(to_string(mode)) +
                    ", " + std::to_string(creators) +
                    " creators) lost a spawn to resource exhaustion; rerunning");
      continue;
    }

    BenchResult r;
    r.workload = workload;
    r.mode = mode;
    r.creators = creators;
    r.run_index = run_index;
    r.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
    for (const auto& c : counts) r.completed += c.completed;
    r.value = static_cast<double>(r.completed) / r.elapsed_s;
    r.stats = delta(before, after);
    r.totals = totals;
    r.creates_first_half = mid.physical_creates - before.physical_creates;
    r.creates_second_half = after.physical_creates - mid.physical_creates;
    if (failed.load()) {
      r.gates_ok = false;
      r.failure = "spawn refused by the OS on every retry";
    } else if (mode == Mode::kDefault && after.cache_hits != 0) {
      r.gates_ok = false;
      r.failure = "cache hits observed in default mode";
    }
    return r;
  }
}

void sort_recursive(Runtime& rt, std::span<std::uint64_t> a, std::span<std::uint64_t> tmp,
                    std::size_t cutoff) {
  if (a.size() <= cutoff) {
    std::sort(a.begin(), a.end());
    return;
  }
  const std::size_t mid = a.size() / 2;
  auto left = a.first(mid);
  auto right = a.subspan(mid);
  JoinHandle h = rt.spawn([&rt, left, tl = tmp.first(mid), cutoff] {
    sort_recursive(rt, left, tl, cutoff);
  });
  try {
    sort_recursive(rt, right, tmp.subspan(mid), cutoff);
  } catch (...) {
    rt.join(h);
    throw;
  }
  if (rt.join(h).poisoned) throw std::runtime_error("fork-join subtask failed");
  std::merge(left.begin(), left.end(), right.begin(), right.end(), tmp.begin());
  std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(a.size()), a.begin());
}

}  // namespace

BenchResult run_spawn_bench(const BenchConfig& cfg, Mode mode, unsigned creators,
                            unsigned run_index, const Log& log) {
  void* spin = reinterpret_cast<void*>(static_cast<std::uintptr_t>(cfg.spin_ns));
  return timed_creator_loop(cfg, Workload::kSpawn, mode, creators, run_index, log,
                            [spin](Runtime& rt) {
                              JoinHandle h;
                              if (rt.try_spawn(&child_entry, spin, h) != std::errc{}) {
                                return false;
                              }
                              ExitStatus s;
                              return rt.try_join(h, s) == std::errc{};
                            });
}

BenchResult run_deferred_bench(const BenchConfig& cfg, Mode mode, unsigned creators,
                               unsigned run_index, const Log& log) {
  const std::uint64_t spin = cfg.spin_ns;
  return timed_creator_loop(cfg, Workload::kDeferred, mode, creators, run_index, log,
                            [spin](Runtime& rt) {
                              Deferred d(rt, [spin]() -> std::uintptr_t {
                                busy_wait(spin);
                                return 0;
                              });
                              try {
                                d.get();
                              } catch (const std::system_error&) {
                                return false;
                              }
                              return true;
                            });
}

BenchResult run_forkjoin_bench(const BenchConfig& cfg, Mode mode, unsigned run_index,
                               const Log& log) {
  std::mt19937_64 rng(cfg.seed + run_index);
  std::vector<std::uint64_t> keys(cfg.sort_keys);
  std::uint64_t checksum = 0;
  for (auto& k : keys) {
    k = rng();
    checksum += k;
  }

  BenchResult r;
  r.workload = Workload::kForkJoin;
  r.mode = mode;
  r.creators = 1;
  r.run_index = run_index;

  Runtime rt(runtime_config_for(mode, cfg.retention));
  const CacheStats before = rt.stats();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fork_join_sort(rt, keys, cfg.cutoff);
  } catch (const std::exception& e) {
    r.gates_ok = false;
    r.failure = std::string("fork-join sort failed: ") + e.what();
    emit(log, r.failure);
  }
  const auto t1 = std::chrono::steady_clock::now();
  rt.wait_quiescent();
  r.totals = rt.stats();
  r.stats = delta(before, r.totals);
  r.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  r.value = r.elapsed_s * 1000.0;
  r.completed = r.stats.spawns_total;

  std::uint64_t after_sum = 0;
  for (auto k : keys) after_sum += k;
  if (r.gates_ok && (!std::is_sorted(keys.begin(), keys.end()) || after_sum != checksum)) {
    r.gates_ok = false;
    r.failure = "fork-join output is not a sorted permutation of the input";
  }
  if (r.gates_ok && mode == Mode::kDefault && r.stats.cache_hits != 0) {
    r.gates_ok = false;
    r.failure = "cache hits observed in default mode";
  }
  return r;
}

BenchResult run_once(const BenchConfig& cfg, Mode mode, unsigned creators,
                     unsigned run_index, const Log& log) {
  switch (cfg.workload) {
    case Workload::kSpawn: return run_spawn_bench(cfg, mode, creators, run_index, log);
    case Workload::kDeferred: return run_deferred_bench(cfg, mode, creators, run_index, log);
    case Workload::kForkJoin: return run_forkjoin_bench(cfg, mode, run_index, log);
  }
  throw std::invalid_argument("unknown workload");
}

double median_of(std::span<const double> values) {
  if (values.empty() || values.size() % 2 == 0) {
    throw std::invalid_argument("median_of needs an odd number of samples");
  }
  std::vector<double> v(values.begin(), values.end());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n' << std::flush; }

void write_csv_row(std::ostream& out, const CsvRow& row) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), row.value);
  (void)ec;
  out << row.workload << ',' << row.mode << ',' << row.creators << ',' << row.run << ','
      << std::string_view(buf, static_cast<std::size_t>(end - buf)) << ',' << row.unit
      << '\n'
      << std::flush;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void bad_row(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("csv line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::vector<CsvRow> parse_csv(std::istream& in) {
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kCsvHeader) bad_row(line_no, "unexpected header");
      saw_header = true;
      continue;
    }
    auto f = split_fields(line);
    if (f.size() != 6) bad_row(line_no, "expected 6 fields");
    CsvRow row;
    row.workload = std::string(f[0]);
    row.mode = std::string(f[1]);
    auto [p1, e1] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), row.creators);
    if (e1 != std::errc{} || p1 != f[2].data() + f[2].size()) bad_row(line_no, "bad creators");
    row.run = std::string(f[3]);
    auto [p2, e2] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), row.value);
    if (e2 != std::errc{} || p2 != f[4].data() + f[4].size()) bad_row(line_no, "bad value");
    row.unit = std::string(f[5]);
    rows.push_back(std::move(row));
  }
  if (!saw_header) throw std::runtime_error("csv: missing header");
  return rows;
}

std::vector<SweepPoint> run_sweep(const BenchConfig& cfg, std::ostream* csv, const Log& log) {
  cfg.validate();
  std::vector<unsigned> points = cfg.sweep.empty() ? std::vector<unsigned>{cfg.creators}
                                                   : cfg.sweep;
  const std::string workload(to_string(cfg.workload));
  const std::string unit(unit_of(cfg.workload));
  if (csv) write_csv_header(*csv);

  std::vector<SweepPoint> out;
  for (unsigned creators : points) {
    for (Mode mode : cfg.modes) {
      SweepPoint p;
      p.mode = mode;
      p.creators = creators;
      std::vector<double> values;
      for (unsigned run = 0; run < cfg.runs; ++run) {
        BenchResult r = run_once(cfg, mode, creators, run, log);
        if (!r.gates_ok) emit(log, "correctness gate failed: " + r.failure);
        values.push_back(r.value);
        if (csv) {
          write_csv_row(*csv, CsvRow{workload, std::string(to_string(mode)), creators,
                                     std::to_string(run), r.value, unit});
        }
        p.runs.push_back(std::move(r));
      }
      p.median = median_of(values);
      if (csv) {
        write_csv_row(*csv, CsvRow{workload, std::string(to_string(mode)), creators, "median",
                                   p.median, unit});
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::uintptr_t Deferred::get() {
  if (!result_) {
    JoinHandle h = rt_->spawn([fn = &fn_] { return (*fn)(); });
    ExitStatus s = rt_->join(h);
    if (s.poisoned) throw std::runtime_error("deferred task failed");
    result_ = s.value;
  }
  return *result_;
}

void fork_join_sort(Runtime& rt, std::span<std::uint64_t> keys, std::size_t cutoff) {
  std::vector<std::uint64_t> scratch(keys.size());
  sort_recursive(rt, keys, scratch, std::max<std::size_t>(cutoff, 1));
}

}  // namespace threadcache::bench
