#pragma once

#include <cstddef>
#include <functional>

namespace agfuse {

/// Worker count used by library stages; 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Work is split across thread_count() workers;
/// callers write results into per-index slots so reductions stay ordered.
/// The first exception thrown by any fn is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace agfuse
