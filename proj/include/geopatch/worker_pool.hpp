#pragma once

#include <cstddef>
#include <functional>

namespace geopatch {

/// 0 means one worker per hardware thread.
[[nodiscard]] std::size_t resolve_jobs(std::size_t requested);

/// Calls fn(i) for every i in [0, n) on up to `jobs` threads. Items are handed
/// out in increasing order; the first exception stops the remaining work and
/// is rethrown once all threads have joined.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace geopatch
