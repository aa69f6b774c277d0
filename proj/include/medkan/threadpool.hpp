#pragma once

#include <cstddef>
#include <functional>

namespace medkan {

// Process-wide worker pool used by the tensor kernels. Work is always
// partitioned statically by index range, so results do not depend on
// scheduling order; at a fixed thread count every run is bit-identical.

/// Set the pool size. n == 0 resets to hardware concurrency.
/// Must not be called while parallel work is in flight.
void set_num_threads(int n);

/// Current pool size (>= 1).
int num_threads();

/// Runs fn(begin, end) over a static partition of [0, n). Falls back to a
/// direct call when n is small or the pool has a single thread. fn must
/// write only to disjoint locations per index.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace medkan
