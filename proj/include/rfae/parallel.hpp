#pragma once

#include <cstddef>
#include <functional>

namespace rfae {

/// Worker-thread cap: min(RFAE_THREADS, hardware). Returns the count OpenMP
/// loops will use; 1 when OpenMP is unavailable.
int worker_threads();

/// Applies the RFAE_THREADS cap to the OpenMP runtime. Idempotent.
void configure_threads();

/// OpenMP-parallel index loop. `body` must be safe to run concurrently for
/// distinct indices.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Serial reference for parallel_for, kept for testing and benchmarks.
void serial_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rfae
