#ifndef TPRT_PARALLEL_HPP_
#define TPRT_PARALLEL_HPP_
//! \file parallel.hpp
//  \brief Fork-join loop helper with deterministic chunking.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tprt {

namespace detail {
inline int& thread_count_ref() {
  static int n = []() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return n;
}
}  // namespace detail

inline void set_thread_count(int n) { detail::thread_count_ref() = n > 0 ? n : 1; }
inline int thread_count() { return detail::thread_count_ref(); }

// Runs body(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker, so writes to disjoint indices never race and results do not depend
// on the worker count.
template <class F>
inline void parallel_for(std::size_t n, F&& body) {
  const int nt = static_cast<int>(std::min<std::size_t>(thread_count(), n));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t chunk = (n + nt - 1) / nt;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&](std::size_t lo, std::size_t hi) {
    try {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> workers;
  workers.reserve(nt - 1);
  for (int t = 1; t < nt; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) workers.emplace_back(run, lo, hi);
  }
  run(0, std::min(n, chunk));
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tprt

#endif  // TPRT_PARALLEL_HPP_
