#pragma once

#include <cstddef>
#include <functional>

namespace appp {

/// Worker count: hardware concurrency, capped by the APPP_THREADS environment variable.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index is handled by exactly
/// one thread; callers write results into per-index slots so the outcome does not depend on the
/// thread count. An exception thrown by a body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace appp
