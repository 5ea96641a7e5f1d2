#pragma once

#include <cstddef>
#include <functional>

namespace safekernel {

// Worker count: SAFEKERNEL_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
int worker_threads();

// Calls body(i) for i in [0, n) on up to worker_threads() threads. The first
// exception thrown by any task is rethrown after all workers have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace safekernel
