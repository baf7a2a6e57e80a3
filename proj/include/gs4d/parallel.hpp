#pragma once

#include <cstddef>
#include <functional>

namespace gs4d {

/// Sets the worker count used by parallel_for. 0 restores the default, which
/// is $GS4D_THREADS when set and the hardware concurrency otherwise.
void set_num_threads(int n);
int num_threads();

/// Calls body(begin, end) on disjoint subranges of [0, n). Callers must only
/// write to per-index outputs so results do not depend on the partition.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t grain = 1);

} // namespace gs4d
