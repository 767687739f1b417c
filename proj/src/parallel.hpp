#pragma once

#include <cstddef>
#include <functional>

namespace relkam {

// Process-wide worker count. Results never depend on it: every parallel loop
// writes to disjoint outputs and reductions happen afterwards in index order.
void set_thread_count(int n);
int thread_count();

// Runs body(i) for i in [0, n), split into contiguous chunks across workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace relkam
