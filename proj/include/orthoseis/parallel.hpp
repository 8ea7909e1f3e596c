#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace orthoseis {

// Static round-robin parallel loop. Every index writes only its own outputs,
// so results are identical for any worker count, including 1. The first
// exception thrown by any index is rethrown on the calling thread.
template <class Fn>
void parallel_for(int n, int threads, Fn fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<bool> failed{false};
  for (int k = 0; k < workers; ++k) {
    pool.emplace_back([k, n, workers, &fn, &first_error, &error_mutex, &failed] {
      try {
        for (int i = k; i < n && !failed.load(std::memory_order_relaxed); i += workers) fn(i);
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Worker count resolution: explicit request, then the ORTHOSEIS_THREADS
// environment variable, then single-threaded.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ORTHOSEIS_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace orthoseis
