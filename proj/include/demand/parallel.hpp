#pragma once

#include <cstddef>
#include <functional>

namespace demand {

/// Runs task(0) .. task(n - 1) on at most `jobs` threads (0 = hardware
/// concurrency). If tasks throw, the exception of the lowest-index failing
/// task is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& task);

}  // namespace demand
