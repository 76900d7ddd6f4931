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

/* Introspection entry point exported by the preload library. Look it up
 * with dlsym(RTLD_DEFAULT, "threadcache_preload_stats"); it is absent when
 * the library is not loaded. */

#ifndef THREADCACHE_PRELOAD_H_
#define THREADCACHE_PRELOAD_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct threadcache_preload_stats_t {
  uint64_t spawns_total;
  uint64_t cache_hits;
  uint64_t physical_creates;
  uint64_t physical_culls;
  uint64_t current_idle;
  uint64_t peak_idle;
  /* Creations forwarded to the real pthread_create. */
  uint64_t forwarded_creates;
  /* Nonzero when THREADCACHE=0 made the library a passthrough. */
  int disabled;
} threadcache_preload_stats_t;

typedef int (*threadcache_preload_stats_fn)(threadcache_preload_stats_t*);

/* Fills *out. Returns 0, or -1 when out is NULL. */
int threadcache_preload_stats(threadcache_preload_stats_t* out);

#ifdef __cplusplus
}
#endif

#endif  /* THREADCACHE_PRELOAD_H_ */
