#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace relpara {

// Runs fn(i) for i in [0, n) on at most max_inflight threads. Callers write
// results into per-index slots, so completion order never leaks into output.
// If any call throws, the exception of the lowest failing index is rethrown
// after all work has finished.
template <class Fn>
void parallel_for(std::size_t n, std::size_t max_inflight, Fn&& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::clamp<std::size_t>(max_inflight, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace relpara
