#pragma once

#include <cstdint>
#include <functional>

namespace synthrad {

// Number of worker threads used by parallel_for. Defaults to the hardware
// concurrency (capped at 8); the SYNTHRAD_THREADS environment variable
// overrides it. Kernels dispatched through parallel_for partition work so
// that every output element is computed entirely by one task, which keeps
// results bit-identical to the serial path for any thread count.
int thread_count();

// Runs fn(begin, end) over disjoint chunks covering [0, n). Runs serially
// when n is small or only one thread is configured.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace synthrad
