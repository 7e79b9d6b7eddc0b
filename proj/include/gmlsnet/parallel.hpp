#pragma once

#include <cstddef>
#include <functional>

namespace gmls {

/// Caps the number of worker threads used by parallel_for (1 = serial).
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Iterations must be independent: each writes
/// only its own output slot, so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gmls
