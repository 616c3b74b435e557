#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bwsemo {

/// Calls fn(i) for i in [0, n) on at most `concurrency` threads. Work is
/// claimed in index order; callers store results by index so the outcome never
/// depends on completion order. The first exception thrown by `fn` stops new
/// work and is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t concurrency, Fn&& fn) {
  concurrency = std::max<std::size_t>(1, std::min(concurrency, n));
  if (concurrency == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    workers.reserve(concurrency);
    for (std::size_t w = 0; w < concurrency; ++w) {
      workers.emplace_back([&] {
        while (!failed.load()) {
          std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace bwsemo
