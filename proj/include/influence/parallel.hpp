#pragma once

#include <cstddef>
#include <functional>

namespace influence {

/// Worker cap used by batch influence and LOO retraining. Defaults to
/// INFLUENCE_KIT_THREADS when set, otherwise 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// output does not depend on scheduling. The first exception thrown by any
/// task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace influence
