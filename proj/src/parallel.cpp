#include "rfae/parallel.hpp"

#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rfae {

int worker_threads() {
  int hw = int(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("RFAE_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0 && cap < hw) hw = cap;
  }
#ifndef _OPENMP
  hw = 1;
#endif
  return hw;
}

void configure_threads() {
#ifdef _OPENMP
  omp_set_num_threads(worker_threads());
#endif
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
#ifdef _OPENMP
  configure_threads();
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < (long long)n; ++i) body(std::size_t(i));
#else
  serial_for(n, body);
#endif
}

void serial_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace rfae
