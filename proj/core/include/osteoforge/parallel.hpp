#pragma once

#include <cstddef>
#include <functional>

namespace osteoforge {

/// Number of worker threads used by pixel-parallel kernels. Initialized from
/// the OSTEOFORGE_THREADS environment variable (capped at the hardware
/// concurrency), 1 if unset.
int worker_threads();

/// Overrides the worker count for the process; values < 1 are treated as 1.
void set_worker_threads(int n);

/// Splits [0, count) into contiguous chunks and runs `body(begin, end)` on up
/// to worker_threads() threads. Chunks never overlap, so kernels whose
/// outputs are independent per index stay bit-exact for any thread count.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace osteoforge
