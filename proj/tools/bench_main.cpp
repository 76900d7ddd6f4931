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

// bench: spawn/join throughput with and without the thread cache.
//
//   bench --workload spawn --creators 32 --duration 10 --runs 7 --mode both
//
// Per-run and median rows go to --csv (stdout by default); progress goes to
// stderr. Retention for cached runs comes from the THREADCACHE_* variables.
// Exits 1 when any correctness gate fails.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "threadcache/bench.hpp"

namespace tb = threadcache::bench;

int main(int argc, char** argv) {
  CLI::App app{"thread creation benchmark"};
  tb::BenchConfig cfg;
  std::string workload = "spawn";
  std::string mode = "both";
  std::string csv_path;

  app.add_option("--workload", workload, "spawn | deferred | forkjoin")
      ->check(CLI::IsMember({"spawn", "deferred", "forkjoin"}))
      ->capture_default_str();
  app.add_option("--creators", cfg.creators, "creator threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--duration", cfg.duration_s, "timed interval per run, seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--runs", cfg.runs, "runs per point (odd)")->capture_default_str();
  app.add_option("--mode", mode, "default | cached | both")
      ->check(CLI::IsMember({"default", "cached", "both"}))
      ->capture_default_str();
  app.add_option("--sweep", cfg.sweep, "creator counts, e.g. 1,2,4")->delimiter(',');
  app.add_option("--csv", csv_path, "output file (default stdout)");
  app.add_option("--seed", cfg.seed, "key seed")->capture_default_str();
  app.add_option("--spin-ns", cfg.spin_ns, "busy work per child, ns")->capture_default_str();
  app.add_option("--cutoff", cfg.cutoff, "fork-join leaf size")->capture_default_str();
  app.add_option("--keys", cfg.sort_keys, "fork-join key count")->capture_default_str();
  app.add_option("--retries", cfg.max_retries, "retries after spawn failure")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  cfg.workload = *tb::parse_workload(workload);
  if (mode == "both") {
    cfg.modes = {tb::Mode::kDefault, tb::Mode::kCached};
  } else {
    cfg.modes = {*tb::parse_mode(mode)};
  }
  cfg.retention = threadcache::RetentionConfig::from_env();

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!csv_path.empty()) {
    file.open(csv_path);
    if (!file) {
      std::cerr << "bench: cannot open " << csv_path << '\n';
      return 2;
    }
    out = &file;
  }

  std::vector<tb::SweepPoint> points;
  try {
    points = tb::run_sweep(cfg, out, [](std::string_view msg) { std::cerr << msg << '\n'; });
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << '\n';
    return 2;
  }

  bool ok = true;
  for (const auto& p : points) {
    for (const auto& r : p.runs) ok = ok && r.gates_ok;
    std::cerr << tb::to_string(cfg.workload) << ' ' << tb::to_string(p.mode)
              << " creators=" << p.creators << " median=" << p.median << ' '
              << tb::unit_of(cfg.workload) << '\n';
  }
  if (!ok) std::cerr << "bench: correctness gate failed\n";
  return ok ? 0 : 1;
}
