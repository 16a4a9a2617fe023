#pragma once

#include <cstddef>
#include <functional>

namespace roomweave {

/// Upper bound on worker threads used by per-view loops (default 1).
void set_max_threads(int n);
int max_threads();

/// Runs fn(i) for i in [0, n). Iterations must be independent; results must
/// not depend on execution order. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, bool allow_parallel = true);

}  // namespace roomweave
