#pragma once

#include <cstddef>
#include <functional>

namespace steercal {

// Name of the environment variable that bounds the worker pool.
inline constexpr const char * kWorkersEnv = "STEERCAL_WORKERS";

// Worker count from STEERCAL_WORKERS, falling back to hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n) on at most `workers` threads (0 = worker_count()).
// Each index is processed exactly once; callers write results into slot i so the
// outcome never depends on scheduling. If any call throws, the exception from the
// lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> & body, std::size_t workers = 0);

} // namespace steercal
