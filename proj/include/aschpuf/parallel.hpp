// Copyright aschpuf contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace aschpuf {

/// Worker count: ASCHPUF_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

/// Calls fn(i) for i in [0, n) across worker threads. fn must only write to
/// per-index state. The first exception thrown is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace aschpuf
