#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace flowline {

inline unsigned worker_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

// Runs fn(i) for i in [begin, end) split into contiguous chunks, one per
// hardware thread. fn must only write to state owned by index i.
template <typename Fn>
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end, Fn&& fn) {
  const std::ptrdiff_t count = end - begin;
  if (count <= 0) return;
  const auto workers = static_cast<std::ptrdiff_t>(std::min<std::size_t>(worker_count(), count));
  if (workers <= 1) {
    for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  const std::ptrdiff_t chunk = (count + workers - 1) / workers;
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = begin + w * chunk;
    const std::ptrdiff_t hi = std::min(end, lo + chunk);
    threads.emplace_back([&, w, lo, hi] {
      try {
        for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace flowline
