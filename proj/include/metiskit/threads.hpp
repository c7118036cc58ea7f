#pragma once

#include <cstddef>
#include <functional>

namespace metiskit {

// Worker cap for parallel sections. Reads METIS_KIT_THREADS once per process;
// unset or invalid falls back to the hardware concurrency.
int thread_cap();

// Runs fn(0..n-1). Results must be written to per-index slots so the outcome
// is identical to a sequential loop. Exceptions from workers are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace metiskit
