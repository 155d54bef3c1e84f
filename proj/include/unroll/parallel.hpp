#pragma once

#include <cstddef>
#include <functional>

namespace unroll {

/// Process-wide worker cap (defaults to 1). Results never depend on it.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker;
/// callers write to per-index slots and reduce serially in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace unroll
