#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "lift3d/error.hpp"

namespace lift3d {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items are
// claimed dynamically; callers write results into slot i so the output order
// never depends on scheduling. The first exception is rethrown after all
// workers stop.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn &&fn) {
  require(threads >= 1, "thread count must be at least 1");
  unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace lift3d
