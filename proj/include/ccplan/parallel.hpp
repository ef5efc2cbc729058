#pragma once

#include <functional>

namespace ccplan {

// Runs fn(0..count-1) across up to `workers` threads (workers <= 1 runs
// inline). Callers own determinism: each index must write only to its own
// output slot.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

}  // namespace ccplan
