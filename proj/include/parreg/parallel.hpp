#pragma once

#include <cstddef>
#include <functional>

namespace parreg {

/// Worker count used by parallel loops. Defaults to PARREG_WORKERS or 1.
std::size_t workers();
void set_workers(std::size_t n);

/// Runs body(i) for i in [0, n) split into contiguous blocks, one per worker.
/// Every index writes only its own output slot, so results are deterministic
/// regardless of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace parreg
