#pragma once

#include <cstddef>
#include <functional>

namespace cerf {

/// Caps the number of worker threads used by row-parallel loops.
/// Zero restores the default (CERF_THREADS, else hardware concurrency).
void set_thread_limit(int threads);
int thread_limit();

/// Runs body(begin, end) over contiguous chunks of [0, count). Chunks are
/// disjoint, so bodies that write only their own rows give results that are
/// independent of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cerf
