#pragma once

#include <cstddef>
#include <functional>

namespace prag::detail {

/// 0 or negative selects the hardware thread count; positive requests are
/// honored as given so block partitioning stays a function of the request.
int resolve_threads(int requested);

/// Splits [0, total) into contiguous blocks, one per worker, and runs
/// fn(worker, begin, end) on each. worker 0 runs on the calling thread.
/// Block boundaries depend only on total and the worker count, so any
/// per-block result a caller collects is reproducible for a fixed count
/// and mergeable into an order-independent whole.
void parallel_blocks(std::size_t total, int threads,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

}  // namespace prag::detail
