#pragma once

#include <functional>

namespace scenesynth {

// Worker count: SCENESYNTH_THREADS if set, else the hardware concurrency.
int workerCount();

// Runs fn(i) for i in [begin, end) across worker threads. Work is split into
// contiguous chunks, so any per-index output is independent of the thread count.
void parallelFor(int begin, int end, const std::function<void(int)>& fn);

}  // namespace scenesynth
