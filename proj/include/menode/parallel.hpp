#pragma once

#include <cstddef>
#include <functional>

namespace menode {

// Worker count: hardware concurrency, capped by the MENODE_THREADS
// environment variable when it is set to a positive integer.
std::size_t thread_count();

// Runs body(i) for i in [0, n) on up to thread_count() threads using static
// contiguous chunks. Callers write results into per-index slots and reduce
// them afterwards in index order, which keeps every reduction deterministic.
// The first exception thrown by any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace menode
