// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "aschpuf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace aschpuf {

unsigned worker_count() {
  static const unsigned count = [] {
    if (const char* env = std::getenv("ASCHPUF_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(std::min(v, 1024L));
    }
    return std::max(1u, std::thread::hardware_concurrency());
  }();
  return count;
}

namespace {

// Set inside worker bodies; nested parallel_for calls run inline.
thread_local bool in_parallel_region = false;

}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = in_parallel_region ? 1u : static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  const std::size_t chunk = std::clamp<std::size_t>(n / (4 * std::max(1u, workers)), 1, 64);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    const bool outer = in_parallel_region;
    in_parallel_region = true;
    try {
      for (std::size_t c = next++; c < chunks; c = next++) {
        const std::size_t end = std::min(n, (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) fn(i);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = chunks;
    }
    in_parallel_region = outer;
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace aschpuf
