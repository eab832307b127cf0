#pragma once

#include <functional>

namespace robglasso::parallel {

// Worker cap for parallel_for. 0 restores the hardware default.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n) on contiguous index chunks. Callers must write
// results into per-index slots and reduce serially afterwards so numeric
// output is independent of the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace robglasso::parallel
