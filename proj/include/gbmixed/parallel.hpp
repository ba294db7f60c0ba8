#pragma once

#include <cstddef>
#include <functional>

namespace gbmixed {

/// Worker count: GBMIXED_THREADS when set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) over contiguous static chunks. Each index is
/// visited exactly once; callers write into per-index slots and reduce afterwards
/// so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gbmixed
