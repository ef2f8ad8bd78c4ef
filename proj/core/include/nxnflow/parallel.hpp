#pragma once

#include <cstddef>
#include <functional>

namespace nxnflow {

/// Worker count: NXNFLOW_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items are
/// independent; callers write results into per-item slots so the outcome does
/// not depend on scheduling.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace nxnflow
