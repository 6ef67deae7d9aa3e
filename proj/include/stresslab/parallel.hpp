#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stresslab {

/// Worker count: an explicit flag wins, then the STRESSLAB_THREADS cap,
/// then hardware concurrency.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STRESSLAB_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) return cap;
  }
  int n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

/// Runs fn(i) for i in [0, count) on `workers` threads. Each index is
/// processed exactly once; callers own output slots indexed by i, so the
/// result is independent of scheduling. The first exception wins and is
/// rethrown on the calling thread.
inline void parallel_for(int64_t count, int workers,
                         const std::function<void(int64_t)>& fn) {
  workers = std::min<int64_t>(std::max(workers, 1), std::max<int64_t>(count, 1));
  if (workers <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (!failed.load(std::memory_order_relaxed)) {
        int64_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace stresslab
