#pragma once

#include <functional>

namespace turbseg {

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index runs
// exactly once; results must be written to per-index slots. If several calls
// throw, the exception of the lowest index is rethrown after all finish.
void parallel_for(int count, int workers, const std::function<void(int)> &fn);

}  // namespace turbseg
