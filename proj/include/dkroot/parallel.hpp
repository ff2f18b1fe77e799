#pragma once

#include <cstddef>
#include <functional>

namespace dkroot {

// Runs fn(i) for i in [0, n) across hardware threads. Each index must write
// only its own output slot, so results are independent of the thread count
// (set DKROOT_THREADS=1 to force serial execution).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dkroot
