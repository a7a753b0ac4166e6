#pragma once

#include <cstddef>
#include <functional>

namespace daest::nd {

/// Worker cap: DAEST_THREADS when set and positive, otherwise the hardware count.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads (0 = worker_count()).
/// Each index runs exactly once; results must be written to per-index slots.
/// The first exception thrown by any body is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t workers = 0);

}  // namespace daest::nd
