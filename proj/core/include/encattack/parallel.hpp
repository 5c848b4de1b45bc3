#pragma once

#include <cstddef>
#include <functional>

namespace encattack {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Each index must write only its own output slot, so results
/// do not depend on the thread count. The first exception is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

unsigned resolve_threads(unsigned requested) noexcept;

}  // namespace encattack
