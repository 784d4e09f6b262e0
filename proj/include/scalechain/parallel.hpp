#pragma once

#include <cstddef>
#include <functional>

namespace scalechain {

// Process-wide worker cap honored by every parallel loop (the --jobs flag).
void set_max_threads(int n);
int max_threads();

// Runs body(i) for i in [0, count). Each index is executed exactly once by a
// single worker, so per-index results do not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace scalechain
